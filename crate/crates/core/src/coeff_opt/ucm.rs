//! Step II: the min-max integer quadratic program in the UCM vector `c`.

use crate::channel::ReceiverContext;
use crate::error::{Error, Result};
use crate::linalg::{dot, eig_sym, Mat};
use crate::rates::Factors;

/// `min_c max_l cᵀQ_l c − 2q_lᵀc + r_l` over integer `c`.
///
/// `r_l = d_l² aᵀM_aa a` does not depend on `c` but is needed to compare the
/// two equations against each other.
#[derive(Clone, Debug, PartialEq)]
pub struct UcmProblem {
    pub quad: [Mat; 2],
    pub lin: [Vec<f64>; 2],
    pub offset: [f64; 2],
}

impl UcmProblem {
    pub fn new(quad: [Mat; 2], lin: [Vec<f64>; 2], offset: [f64; 2]) -> Result<Self> {
        let n = lin[0].len();
        for l in 0..2 {
            if quad[l].rows() != n || quad[l].cols() != n || lin[l].len() != n {
                return Err(Error::DimensionMismatch(format!("UCM problem block {l} has inconsistent sizes")));
            }
            if !quad[l].is_symmetric(1e-9) {
                return Err(Error::DegenerateInput(format!("Q_{} is not symmetric", l + 1)));
            }
            if n > 0 {
                let min = eig_sym(&quad[l])?.min();
                if min < -1e-9 * quad[l].max_abs().max(1.0) {
                    return Err(Error::DegenerateInput(format!(
                        "Q_{} is not positive semidefinite (min eigenvalue {min:e})",
                        l + 1
                    )));
                }
            }
        }
        Ok(UcmProblem { quad, lin, offset })
    }

    pub fn dim(&self) -> usize {
        self.lin[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.dim() == 0
    }

    pub fn value_int(&self, l: usize, c: &[i64]) -> f64 {
        let cf: Vec<f64> = c.iter().map(|&x| x as f64).collect();
        self.value(l, &cf)
    }

    pub fn value(&self, l: usize, c: &[f64]) -> f64 {
        self.quad[l].quad_form(c) - 2.0 * dot(&self.lin[l], c) + self.offset[l]
    }

    pub fn objective_int(&self, c: &[i64]) -> f64 {
        self.value_int(0, c).max(self.value_int(1, c))
    }

    pub fn objective(&self, c: &[f64]) -> f64 {
        self.value(0, c).max(self.value(1, c))
    }
}

/// `Q_l = e_l² M_cc`, `q_l = e_l d_l H_kᵀ T H_kk a`, `r_l = d_l² aᵀM_aa a`.
pub fn build_ucm_problem(ctx: &ReceiverContext, a: &[i64], factors: Factors) -> Result<UcmProblem> {
    if a.len() != ctx.nt {
        return Err(Error::DimensionMismatch(format!("a has length {}, want {}", a.len(), ctx.nt)));
    }
    if a.iter().all(|&x| x == 0) {
        return Err(Error::DegenerateInput("DCM vector a is all-zero".into()));
    }
    let af: Vec<f64> = a.iter().map(|&x| x as f64).collect();
    // M_ac = −H_kkᵀ T H_k, so H_kᵀ T H_kk a = −M_acᵀ a
    let cross: Vec<f64> = ctx.m_cross().tr_matvec(&af).iter().map(|x| -x).collect();
    let aa = ctx.m_desired().quad_form(&af);
    let build = |d: i64, e: i64| {
        let (d, e) = (d as f64, e as f64);
        let q = ctx.m_interference().scale(e * e);
        let lin: Vec<f64> = cross.iter().map(|x| e * d * x).collect();
        (q, lin, d * d * aa)
    };
    let (q1, l1, r1) = build(factors.d1, factors.e1);
    let (q2, l2, r2) = build(factors.d2, factors.e2);
    Ok(UcmProblem { quad: [q1, q2], lin: [l1, l2], offset: [r1, r2] })
}

/// Nearest-integer rounding (ties away from zero) followed by a single-coordinate
/// ±1 repair: the best of the `2·Lc + 1` candidates wins, the plain rounding on ties.
pub fn round_ucm(c_relaxed: &[f64], p: &UcmProblem) -> Vec<i64> {
    let mut best = Vec::new();
    let mut best_val = f64::INFINITY;
    for cand in rounding_candidates(c_relaxed) {
        let v = p.objective_int(&cand);
        if v < best_val {
            best_val = v;
            best = cand;
        }
    }
    best
}

/// The nearest integer point to `c_relaxed` followed by its `2 Lc`
/// single-coordinate ±1 neighbours.
pub fn rounding_candidates(c_relaxed: &[f64]) -> Vec<Vec<i64>> {
    let base: Vec<i64> = c_relaxed.iter().map(|x| x.round() as i64).collect();
    let mut out = Vec::with_capacity(2 * base.len() + 1);
    out.push(base.clone());
    for i in 0..base.len() {
        for step in [-1, 1] {
            let mut cand = base.clone();
            cand[i] += step;
            out.push(cand);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelSet, Topology};
    use crate::rates::stacked_form;

    #[test]
    fn zero_e_gives_zero_blocks() {
        let cs = ChannelSet::generate(&Topology::symmetric(2, 2, 2), 3).unwrap();
        let ctx = ReceiverContext::new(&cs, 0, 10.0).unwrap();
        let p = build_ucm_problem(&ctx, &[1, 2], Factors::new(1, 0, 0, 1)).unwrap();
        assert_eq!(p.quad[0], Mat::zeros(2, 2));
        assert!(p.lin[0].iter().all(|&x| x == 0.0));
        assert!(p.lin[1].iter().all(|&x| x == 0.0));
        assert_eq!(p.offset[1], 0.0);
    }

    #[test]
    fn objective_reproduces_equation_forms() {
        let topo = Topology::symmetric(3, 2, 3);
        for seed in 0..50 {
            let cs = ChannelSet::generate(&topo, seed).unwrap();
            let ctx = ReceiverContext::new(&cs, (seed % 3) as usize, 20.0).unwrap();
            let a = [1 + (seed % 3) as i64, -1];
            let f = Factors::new(2, -1, 1, 3);
            let p = build_ucm_problem(&ctx, &a, f).unwrap();
            for c in [[1, 0, -2, 1], [0, 0, 0, 0], [3, -1, 1, 2]] {
                for (l, (d, e)) in f.rows().into_iter().enumerate() {
                    let direct = stacked_form(&ctx, d, e, &a, &c);
                    let via = p.value_int(l, &c);
                    assert!((direct - via).abs() < 1e-9 * (1.0 + direct.abs()), "{direct} vs {via}");
                }
            }
        }
    }

    #[test]
    fn single_user_problem_is_empty() {
        let cs = ChannelSet::generate(&Topology::symmetric(1, 2, 2), 1).unwrap();
        let ctx = ReceiverContext::new(&cs, 0, 10.0).unwrap();
        let p = build_ucm_problem(&ctx, &[1, 0], Factors::INTERFERENCE_FREE).unwrap();
        assert!(p.is_empty());
        assert_eq!(round_ucm(&[], &p), Vec::<i64>::new());
    }

    #[test]
    fn rounds_to_nearest() {
        let p = UcmProblem::new(
            [Mat::identity(2), Mat::identity(2)],
            [vec![0.0; 2], vec![0.0; 2]],
            [0.0, 0.0],
        )
        .unwrap();
        assert_eq!(round_ucm(&[0.2, -0.4], &p), vec![0, 0]);
    }

    #[test]
    fn half_rounds_away_from_zero() {
        // flat objective: the repair never moves, exposing the base rounding
        let p = UcmProblem::new(
            [Mat::zeros(2, 2), Mat::zeros(2, 2)],
            [vec![0.0; 2], vec![0.0; 2]],
            [1.0, 1.0],
        )
        .unwrap();
        assert_eq!(round_ucm(&[0.5, -0.5], &p), vec![1, -1]);
        assert_eq!(round_ucm(&[2.5, -1.5], &p), vec![3, -2]);
    }

    #[test]
    fn repair_beats_plain_rounding() {
        // Strongly correlated form: the minimizer over integers sits next to
        // the rounded relaxed point, not on it.
        let q = Mat::from_rows(&[[1.0, 0.99], [0.99, 1.0]]);
        // unconstrained minimizer Q⁻¹q = (1.6, −1.4)
        let lin = vec![0.214, 0.184];
        let p = UcmProblem::new([q.clone(), q], [lin.clone(), lin], [0.0, 0.0]).unwrap();
        let relaxed = [1.6f64, -1.4];
        let plain: Vec<i64> = relaxed.iter().map(|x| x.round() as i64).collect();
        assert_eq!(plain, vec![2, -1]);
        let repaired = round_ucm(&relaxed, &p);
        assert!(p.objective_int(&repaired) < p.objective_int(&plain));
        assert_eq!(repaired, vec![1, -1]);
    }

    #[test]
    fn rejects_indefinite_quadratic() {
        let bad = Mat::from_rows(&[[1.0, 0.0], [0.0, -1.0]]);
        assert!(UcmProblem::new([bad, Mat::identity(2)], [vec![0.0; 2], vec![0.0; 2]], [0.0; 2]).is_err());
    }
}
