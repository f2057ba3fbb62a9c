//! Semidefinite relaxation of the UCM min-max problem.
//!
//! ```text
//! min ε  s.t.  Tr(Q_l C) − 2q_lᵀc + r_l ≤ ε   (l = 1, 2)
//!              diag(C) ≥ c
//!              [[C, c], [cᵀ, 1]] ⪰ 0
//! ```
//!
//! Solved with a primal log-barrier method: damped Newton on
//! `t·ε − log det X − Σ log(slacks)` for an increasing sequence of `t`.
//! Problems are tiny (Lc rarely exceeds 8), so the dense Newton system is cheap.

use crate::coeff_opt::{SearchConfig, UcmProblem};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    /// Relaxed objective: the larger constraint value at `(c, C)`.
    pub epsilon: f64,
    pub c: Vec<f64>,
    pub cmat: Mat,
    /// Duality-gap bound at termination.
    pub gap: f64,
    pub newton_steps: usize,
}

/// Variable layout: `x = [ε, c_1..c_n, C_ij (i ≤ j)]`.
struct Layout {
    n: usize,
    /// For each variable, the entries of `X` it sets (one or two symmetric positions).
    positions: Vec<Vec<(usize, usize)>>,
    /// Index of `C_ij` in `x` for `i ≤ j`.
    c_index: Vec<Vec<usize>>,
}

impl Layout {
    fn new(n: usize) -> Self {
        let mut positions = vec![Vec::new()];
        for i in 0..n {
            positions.push(vec![(i, n), (n, i)]);
        }
        let mut c_index = vec![vec![usize::MAX; n]; n];
        for i in 0..n {
            for j in i..n {
                c_index[i][j] = positions.len();
                c_index[j][i] = positions.len();
                positions.push(if i == j { vec![(i, i)] } else { vec![(i, j), (j, i)] });
            }
        }
        Layout { n, positions, c_index }
    }

    fn len(&self) -> usize {
        self.positions.len()
    }

    fn matrix(&self, x: &[f64]) -> Mat {
        let n = self.n;
        Mat::from_fn(n + 1, n + 1, |i, j| {
            if i == n && j == n {
                1.0
            } else if i == n {
                x[1 + j]
            } else if j == n {
                x[1 + i]
            } else {
                x[self.c_index[i][j]]
            }
        })
    }
}

/// Affine slacks `s = gᵀx + h`, all required to be positive.
struct Slacks {
    g: Vec<Vec<f64>>,
    h: Vec<f64>,
}

impl Slacks {
    fn new(p: &UcmProblem, lay: &Layout) -> Self {
        let n = lay.n;
        let m = lay.len();
        let mut g = Vec::new();
        let mut h = Vec::new();
        // ε − Tr(Q_l C) + 2q_lᵀc − r_l
        for l in 0..2 {
            let mut row = vec![0.0; m];
            row[0] = 1.0;
            for i in 0..n {
                row[1 + i] = 2.0 * p.lin[l][i];
                for j in i..n {
                    let w = if i == j { 1.0 } else { 2.0 };
                    row[lay.c_index[i][j]] = -w * p.quad[l][(i, j)];
                }
            }
            g.push(row);
            h.push(-p.offset[l]);
        }
        // C_ii − c_i
        for i in 0..n {
            let mut row = vec![0.0; m];
            row[lay.c_index[i][i]] = 1.0;
            row[1 + i] = -1.0;
            g.push(row);
            h.push(0.0);
        }
        Slacks { g, h }
    }

    fn values(&self, x: &[f64]) -> Vec<f64> {
        self.g
            .iter()
            .zip(&self.h)
            .map(|(g, h)| g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + h)
            .collect()
    }
}

struct Barrier<'a> {
    lay: &'a Layout,
    slacks: &'a Slacks,
}

impl Barrier<'_> {
    /// `t·ε − log det X − Σ log s`, or `None` outside the domain.
    fn value(&self, t: f64, x: &[f64]) -> Option<f64> {
        let chol = Cholesky::new(&self.lay.matrix(x)).ok()?;
        let s = self.slacks.values(x);
        if s.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let logdet: f64 = (0..chol.dim()).map(|i| chol.factor()[(i, i)].ln()).sum::<f64>() * 2.0;
        Some(t * x[0] - logdet - s.iter().map(|v| v.ln()).sum::<f64>())
    }

    fn gradient_hessian(&self, t: f64, x: &[f64]) -> Result<(Vec<f64>, Mat)> {
        let m = self.lay.len();
        let xm = self.lay.matrix(x);
        let chol = Cholesky::new(&xm)?;
        let z = chol.solve_mat(&Mat::identity(xm.rows()));
        let s = self.slacks.values(x);
        let mut grad = vec![0.0; m];
        grad[0] = t;
        let mut hess = vec![0.0; m * m];
        for j in 1..m {
            for &(a, b) in &self.lay.positions[j] {
                grad[j] -= z[(b, a)];
            }
            for k in j..m {
                // Tr(Z B_j Z B_k) with Tr(Z E_ab Z E_cd) = Z_da Z_bc
                let mut v = 0.0;
                for &(a, b) in &self.lay.positions[j] {
                    for &(c, d) in &self.lay.positions[k] {
                        v += z[(d, a)] * z[(b, c)];
                    }
                }
                hess[j * m + k] = v;
                hess[k * m + j] = v;
            }
        }
        for (g, &sv) in self.slacks.g.iter().zip(&s) {
            for j in 0..m {
                if g[j] == 0.0 {
                    continue;
                }
                grad[j] -= g[j] / sv;
                for k in 0..m {
                    hess[j * m + k] += g[j] * g[k] / (sv * sv);
                }
            }
        }
        Ok((grad, Mat::from_vec(m, m, hess)))
    }
}

/// Near the boundary the Newton matrix gets badly scaled; a diagonal shift
/// rescues the factorization without changing the descent direction much.
fn regularized_cholesky(h: &Mat) -> Option<Cholesky> {
    if let Ok(ch) = Cholesky::new(h) {
        return Some(ch);
    }
    let scale = h.diag().into_iter().fold(0.0, f64::max).max(1e-300);
    let mut tau = 1e-12 * scale;
    for _ in 0..8 {
        if let Ok(ch) = Cholesky::new(&h.add_diag(tau)) {
            return Some(ch);
        }
        tau *= 100.0;
    }
    None
}

/// Solves the relaxation to duality gap `cfg.sdp_tol`.
pub fn solve_ucm_sdp(p: &UcmProblem, cfg: &SearchConfig) -> Result<SdpSolution> {
    let n = p.dim();
    if n == 0 {
        return Err(Error::DegenerateInput("SDP relaxation needs Lc ≥ 1".into()));
    }
    let lay = Layout::new(n);
    let slacks = Slacks::new(p, &lay);
    let barrier = Barrier { lay: &lay, slacks: &slacks };
    let m = lay.len();

    // strictly feasible start: c = 0, C = I
    let mut x = vec![0.0; m];
    for i in 0..n {
        x[lay.c_index[i][i]] = 1.0;
    }
    x[0] = (0..2).map(|l| p.quad[l].trace() + p.offset[l]).fold(f64::NEG_INFINITY, f64::max).abs() + 1.0;

    let nu = (n + 1 + 2 + n) as f64;
    let mut t = 1.0;
    let mut steps = 0usize;
    loop {
        // centering
        loop {
            if steps >= cfg.sdp_max_iters {
                return Err(Error::SolverStall { iterations: steps, gap: nu / t });
            }
            let (grad, hess) = barrier.gradient_hessian(t, &x)?;
            let Some(ch) = regularized_cholesky(&hess) else {
                return Err(Error::SolverStall { iterations: steps, gap: nu / t });
            };
            let dx = ch.solve_vec(&grad.iter().map(|g| -g).collect::<Vec<_>>());
            steps += 1;
            let decrement: f64 = -grad.iter().zip(&dx).map(|(g, d)| g * d).sum::<f64>();
            if decrement / 2.0 <= 1e-8 {
                break;
            }
            let f0 = barrier.value(t, &x).expect("iterate stays interior");
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-14 {
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + step * d).collect();
                if let Some(f1) = barrier.value(t, &trial) {
                    if f1 < f0 && f1 <= f0 - 0.25 * step * decrement {
                        x = trial;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                // below float resolution of the barrier value: centered
                break;
            }
        }
        if nu / t < cfg.sdp_tol {
            break;
        }
        t *= 10.0;
    }

    let c: Vec<f64> = x[1..=n].to_vec();
    let cmat = Mat::from_fn(n, n, |i, j| x[lay.c_index[i][j]]);
    let epsilon = (0..2)
        .map(|l| {
            let tr: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| p.quad[l][(i, j)] * cmat[(i, j)]).sum();
            tr - 2.0 * p.lin[l].iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() + p.offset[l]
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SdpSolution { epsilon, c, cmat, gap: nu / t, newton_steps: steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff_opt::round_ucm;
    use crate::linalg::eig_sym;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let g = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        g.tr_matmul(&g).add_diag(0.5)
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> UcmProblem {
        let quad = [random_psd(rng, n), random_psd(rng, n)];
        let lin = [
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        ];
        let offset = [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
        UcmProblem::new(quad, lin, offset).unwrap()
    }

    fn brute_integer(p: &UcmProblem, bound: i64) -> f64 {
        let n = p.dim();
        let mut c = vec![-bound; n];
        let mut best = f64::INFINITY;
        loop {
            best = best.min(p.objective_int(&c));
            let mut i = 0;
            while i < n {
                c[i] += 1;
                if c[i] <= bound {
                    break;
                }
                c[i] = -bound;
                i += 1;
            }
            if i == n {
                return best;
            }
        }
    }

    #[test]
    fn homogeneous_problem_has_zero_optimum() {
        let p = UcmProblem::new(
            [Mat::identity(2), Mat::from_diag(&[2.0, 3.0])],
            [vec![0.0; 2], vec![0.0; 2]],
            [0.0, 0.0],
        )
        .unwrap();
        let sol = solve_ucm_sdp(&p, &SearchConfig::default()).unwrap();
        assert!(sol.epsilon.abs() < 1e-5, "{sol:?}");
        assert!(sol.c.iter().all(|x| x.abs() < 1e-3));
        assert!(sol.cmat.max_abs() < 1e-5);
    }

    #[test]
    fn scalar_case_matches_one_dimensional_search() {
        // With one coordinate, the optimal C is max(c, c²) and the
        // relaxation is a convex problem in c alone.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let p = random_problem(&mut rng, 1);
            let reduced = |c: f64| {
                let cc = c.max(c * c);
                (0..2)
                    .map(|l| p.quad[l][(0, 0)] * cc - 2.0 * p.lin[l][0] * c + p.offset[l])
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            let (mut lo, mut hi) = (-50.0, 50.0);
            for _ in 0..300 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if reduced(m1) < reduced(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let want = reduced(0.5 * (lo + hi));
            let sol = solve_ucm_sdp(&p, &SearchConfig::default()).unwrap();
            assert!((sol.epsilon - want).abs() < 1e-5, "sdp {} vs 1-d {}", sol.epsilon, want);
        }
    }

    #[test]
    fn relaxation_lower_bounds_integer_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..40 {
            let p = random_problem(&mut rng, 3);
            let sol = solve_ucm_sdp(&p, &SearchConfig::default()).unwrap();
            // any c beating c = 0 satisfies λ‖c‖² − 2‖q‖‖c‖ ≤ max r − min r
            let lam = (0..2).map(|l| eig_sym(&p.quad[l]).unwrap().min()).fold(f64::INFINITY, f64::min);
            let qn = (0..2).map(|l| p.lin[l].iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max);
            let dr = (p.offset[0] - p.offset[1]).abs();
            let bound = (qn + (qn * qn + lam * dr).sqrt()) / lam;
            assert!(bound <= 10.0);
            let best = brute_integer(&p, bound.ceil() as i64);
            assert!(sol.epsilon <= best + 1e-5, "sdp {} > integer {}", sol.epsilon, best);
            let rounded = round_ucm(&sol.c, &p);
            assert!(p.objective_int(&rounded) >= best - 1e-12);
        }
    }

    #[test]
    fn solution_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let p = random_problem(&mut rng, 4);
        let sol = solve_ucm_sdp(&p, &SearchConfig::default()).unwrap();
        for i in 0..4 {
            assert!(sol.cmat[(i, i)] >= sol.c[i] - 1e-9);
        }
        let x = Mat::from_fn(5, 5, |i, j| match (i < 4, j < 4) {
            (true, true) => sol.cmat[(i, j)],
            (true, false) => sol.c[i],
            (false, true) => sol.c[j],
            _ => 1.0,
        });
        assert!(eig_sym(&x).unwrap().min() > -1e-9);
        assert!(sol.gap < 1e-6);
    }

    #[test]
    fn tiny_budget_stalls() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = random_problem(&mut rng, 3);
        let cfg = SearchConfig { sdp_max_iters: 2, ..SearchConfig::default() };
        assert!(matches!(solve_ucm_sdp(&p, &cfg), Err(Error::SolverStall { .. })));
    }
}
