//! Step I: coefficient factors from the 2×2 Gram matrix `U`.

use crate::channel::ReceiverContext;
use crate::error::{Error, Result};
use crate::linalg::{dot, min_eig_2x2, Mat};
use crate::rates::Factors;

/// Gram matrix of the factor lattice: `[d e] U [d e]ᵀ` is the quadratic form
/// of the stacked ECV `[d·a; e·c]`. Positive definite for every nonzero
/// `a`, `c`; construction fails loudly otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct GramU {
    u: Mat,
}

impl GramU {
    pub fn new(u: Mat) -> Result<Self> {
        if u.rows() != 2 || u.cols() != 2 {
            return Err(Error::DimensionMismatch("U must be 2x2".into()));
        }
        let (a, b, d) = (u[(0, 0)], 0.5 * (u[(0, 1)] + u[(1, 0)]), u[(1, 1)]);
        let min_eig = min_eig_2x2(a, b, d);
        let trace = a + d;
        if !(min_eig > 1e-10 * trace) {
            return Err(Error::TheoremViolation(format!(
                "U is not positive definite: min eigenvalue {min_eig:e}, trace {trace:e}"
            )));
        }
        Ok(GramU { u: Mat::from_rows(&[[a, b], [b, d]]) })
    }

    pub fn matrix(&self) -> &Mat {
        &self.u
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eig_2x2(self.u[(0, 0)], self.u[(0, 1)], self.u[(1, 1)])
    }

    #[inline]
    pub fn form(&self, d: i64, e: i64) -> f64 {
        let (d, e) = (d as f64, e as f64);
        d * d * self.u[(0, 0)] + 2.0 * d * e * self.u[(0, 1)] + e * e * self.u[(1, 1)]
    }

    #[inline]
    fn inner(&self, x: (i64, i64), y: (i64, i64)) -> f64 {
        let (x0, x1, y0, y1) = (x.0 as f64, x.1 as f64, y.0 as f64, y.1 as f64);
        x0 * y0 * self.u[(0, 0)] + (x0 * y1 + x1 * y0) * self.u[(0, 1)] + x1 * y1 * self.u[(1, 1)]
    }
}

/// `U = diag(aᵀa, cᵀc) − [H_kk a, H_k c]ᵀ (I/SNR + ĤĤᵀ)⁻¹ [H_kk a, H_k c]`.
pub fn build_u(ctx: &ReceiverContext, a: &[i64], c: &[i64]) -> Result<GramU> {
    if a.iter().all(|&x| x == 0) || c.iter().all(|&x| x == 0) {
        return Err(Error::DegenerateInput("build_u needs nonzero a and c".into()));
    }
    let y_a = ctx.hkk.matvec_int(a);
    let y_c = ctx.hk.matvec_int(c);
    let mut w_a = y_a.clone();
    let mut w_c = y_c.clone();
    ctx.kernel().forward(&mut w_a);
    ctx.kernel().forward(&mut w_c);
    let aa: f64 = a.iter().map(|&x| (x * x) as f64).sum();
    let cc: f64 = c.iter().map(|&x| (x * x) as f64).sum();
    let u = Mat::from_rows(&[
        [aa - dot(&w_a, &w_a), -dot(&w_a, &w_c)],
        [-dot(&w_c, &w_a), cc - dot(&w_c, &w_c)],
    ]);
    GramU::new(u)
}

/// Lagrange–Gauss reduction of the integer lattice under the form `U`.
///
/// Returns a basis `(b1, b2)` attaining both successive minima, so `b2`'s
/// form is the smallest possible maximum over linearly independent pairs.
pub fn gauss_reduce(u: &GramU) -> [(i64, i64); 2] {
    let mut b1 = (1i64, 0i64);
    let mut b2 = (0i64, 1i64);
    let mut n1 = u.form(b1.0, b1.1);
    let mut n2 = u.form(b2.0, b2.1);
    for _ in 0..200 {
        if n1 > n2 {
            std::mem::swap(&mut b1, &mut b2);
            std::mem::swap(&mut n1, &mut n2);
        }
        let mu = (u.inner(b1, b2) / n1).round();
        if mu == 0.0 {
            break;
        }
        let mu = mu as i64;
        b2 = (b2.0 - mu * b1.0, b2.1 - mu * b1.1);
        n2 = u.form(b2.0, b2.1);
        if n2 >= n1 {
            break;
        }
    }
    if n1 > n2 {
        std::mem::swap(&mut b1, &mut b2);
    }
    [canonical_sign(b1), canonical_sign(b2)]
}

fn canonical_sign(v: (i64, i64)) -> (i64, i64) {
    if v.0 < 0 || (v.0 == 0 && v.1 < 0) {
        (-v.0, -v.1)
    } else {
        v
    }
}

/// Optimal factor pairs for a given `U` and the attained objective
/// `max_l [d_l e_l] U [d_l e_l]ᵀ`.
pub fn step1_factors(u: &GramU) -> (Factors, f64) {
    let [b1, b2] = gauss_reduce(u);
    let f = Factors::new(b1.0, b1.1, b2.0, b2.1);
    let obj = u.form(b1.0, b1.1).max(u.form(b2.0, b2.1));
    (f, obj)
}

/// Step I as run inside the alternating search. With no interference (or `c = 0`) both
/// equations reduce to `[a; 0]` and the fixed factors (1,0),(1,1) are optimal.
pub fn select_factors(ctx: &ReceiverContext, a: &[i64], c: &[i64]) -> Result<Factors> {
    if c.iter().all(|&x| x == 0) {
        return Ok(Factors::INTERFERENCE_FREE);
    }
    let u = build_u(ctx, a, c)?;
    Ok(step1_factors(&u).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelSet, Topology};
    use crate::rates::stacked_form;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive min over independent pairs in the box |d|,|e| ≤ bound.
    fn brute_factors(u: &GramU, bound: i64) -> f64 {
        let mut pts = Vec::new();
        for d in -bound..=bound {
            for e in -bound..=bound {
                if (d, e) != (0, 0) {
                    pts.push((d, e, u.form(d, e)));
                }
            }
        }
        let mut best = f64::INFINITY;
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                if p.0 * q.1 - p.1 * q.0 != 0 {
                    best = best.min(p.2.max(q.2));
                }
            }
        }
        best
    }

    #[test]
    fn identity_gram() {
        let u = GramU::new(Mat::identity(2)).unwrap();
        let (f, obj) = step1_factors(&u);
        assert_eq!(obj, 1.0);
        assert_ne!(f.det(), 0);
        assert_eq!(u.form(f.d1, f.e1), 1.0);
    }

    #[test]
    fn axis_aligned_gram() {
        let u = GramU::new(Mat::from_diag(&[1.0, 4.0])).unwrap();
        let (f, obj) = step1_factors(&u);
        assert_eq!(obj, 4.0);
        assert_eq!((f.d1.abs(), f.e1.abs(), f.d2.abs(), f.e2.abs()), (1, 0, 0, 1));
    }

    #[test]
    fn rejects_non_pd() {
        assert!(matches!(
            GramU::new(Mat::from_rows(&[[1.0, 1.0], [1.0, 1.0]])),
            Err(Error::TheoremViolation(_))
        ));
    }

    #[test]
    fn gauss_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let g = Mat::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
            let u = GramU::new(g.tr_matmul(&g).add_diag(0.2)).unwrap();
            let (f, obj) = step1_factors(&u);
            assert_ne!(f.det(), 0);
            // both minimizers have coordinates at most sqrt(obj / λ_min)
            assert!((obj / u.min_eigenvalue()).sqrt() <= 10.0);
            let brute = brute_factors(&u, 10);
            assert!((obj - brute).abs() <= 1e-12 * brute.max(1.0), "gauss {obj} brute {brute}");
        }
    }

    #[test]
    fn zero_channel_u_is_diagonal() {
        let ctx = ReceiverContext::from_hhat(Mat::zeros(2, 3), 0, 1, 10.0).unwrap();
        let u = build_u(&ctx, &[2], &[1, -1]).unwrap();
        assert_eq!(u.matrix(), &Mat::from_diag(&[4.0, 2.0]));
    }

    #[test]
    fn scalar_u_by_hand() {
        // Ĥ = [h, g] with a = 1, c = 1, T = 1/(1/snr + h² + g²)
        let (h, g, snr) = (0.8, -0.5, 4.0);
        let ctx = ReceiverContext::from_hhat(Mat::from_rows(&[[h, g]]), 0, 1, snr).unwrap();
        let t = 1.0 / (1.0 / snr + h * h + g * g);
        let u = build_u(&ctx, &[1], &[1]).unwrap();
        let m = u.matrix();
        assert!((m[(0, 0)] - (1.0 - h * h * t)).abs() < 1e-14);
        assert!((m[(0, 1)] + h * g * t).abs() < 1e-14);
        assert!((m[(1, 1)] - (1.0 - g * g * t)).abs() < 1e-14);
    }

    #[test]
    fn u_reproduces_stacked_forms_and_is_pd() {
        let topo = Topology::symmetric(3, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..200 {
            let cs = ChannelSet::generate(&topo, seed).unwrap();
            let ctx = ReceiverContext::new(&cs, (seed % 3) as usize, 10f64.powf((seed % 4) as f64)).unwrap();
            let a: Vec<i64> = loop {
                let v: Vec<i64> = (0..2).map(|_| rng.random_range(-3..=3)).collect();
                if v.iter().any(|&x| x != 0) {
                    break v;
                }
            };
            let c: Vec<i64> = loop {
                let v: Vec<i64> = (0..4).map(|_| rng.random_range(-3..=3)).collect();
                if v.iter().any(|&x| x != 0) {
                    break v;
                }
            };
            let u = build_u(&ctx, &a, &c).unwrap();
            assert!(u.min_eigenvalue() > 0.0);
            for (d, e) in [(1, 0), (0, 1), (2, -1), (-3, 2)] {
                let direct = stacked_form(&ctx, d, e, &a, &c);
                assert!((u.form(d, e) - direct).abs() < 1e-9 * (1.0 + direct));
            }
        }
    }

    #[test]
    fn interference_free_factors() {
        let ctx = ReceiverContext::from_hhat(Mat::from_rows(&[[1.0, 0.5]]), 0, 1, 10.0).unwrap();
        assert_eq!(select_factors(&ctx, &[1], &[0]).unwrap(), Factors::INTERFERENCE_FREE);
    }
}
