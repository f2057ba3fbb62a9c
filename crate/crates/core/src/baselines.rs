//! Reference receivers: linear MMSE, zero-forcing, and integer-forcing
//! linear receiver (IFLR) decoding all `L` streams.

use serde::{Deserialize, Serialize};

use crate::channel::ReceiverContext;
use crate::coeff_opt::SearchConfig;
use crate::linalg::{dot, integer_rank, Cholesky, Mat};
use crate::rates::rate_from_form;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRates {
    pub mmse: f64,
    pub zf: f64,
    pub iflr: f64,
}

pub fn baseline_rates(ctx: &ReceiverContext, cfg: &SearchConfig) -> BaselineRates {
    BaselineRates { mmse: mmse_rate(ctx), zf: zf_rate(ctx), iflr: iflr_rate(ctx, cfg) }
}

/// `Σ_i log2(1 + SINR_i)` over the desired streams, with
/// `SINR_i = SNR h_iᵀ (I + SNR Σ_{j≠i} h_j h_jᵀ)⁻¹ h_i`.
pub fn mmse_rate(ctx: &ReceiverContext) -> f64 {
    let h = &ctx.hhat;
    let nr = h.rows();
    let snr = ctx.snr;
    let mut total = 0.0;
    for i in ctx.offset..ctx.offset + ctx.nt {
        let cov = Mat::from_fn(nr, nr, |r, s| {
            let mut v = if r == s { 1.0 } else { 0.0 };
            for j in (0..h.cols()).filter(|&j| j != i) {
                v += snr * h[(r, j)] * h[(s, j)];
            }
            v
        });
        let hi = h.column(i);
        let chol = Cholesky::new(&cov).expect("identity plus PSD is positive definite");
        let sinr = snr * dot(&hi, &chol.solve_vec(&hi));
        total += (1.0 + sinr).log2();
    }
    total
}

/// Zero-forcing over all `L` streams: `SNR_i = SNR / [(ĤᵀĤ)⁻¹]_ii`.
/// Zero when `Nr < L` or `Ĥ` is rank deficient.
pub fn zf_rate(ctx: &ReceiverContext) -> f64 {
    let h = &ctx.hhat;
    if h.rows() < h.cols() {
        return 0.0;
    }
    let gram = h.tr_matmul(h);
    let Ok(chol) = Cholesky::new(&gram) else {
        return 0.0;
    };
    let mut total = 0.0;
    for i in ctx.offset..ctx.offset + ctx.nt {
        let mut e = vec![0.0; h.cols()];
        e[i] = 1.0;
        let inv_ii = chol.solve_vec(&e)[i];
        total += (1.0 + ctx.snr / inv_ii).log2();
    }
    total
}

/// LLL reduction (Lovász parameter `delta`) of the columns of `basis`.
/// Returns the reduced columns and the unimodular transform: reduced column
/// `j` equals `basis · t[j]`.
pub fn lll_reduce(basis: &Mat, delta: f64) -> (Vec<Vec<f64>>, Vec<Vec<i64>>) {
    let n = basis.cols();
    let mut b: Vec<Vec<f64>> = (0..n).map(|j| basis.column(j)).collect();
    let mut t: Vec<Vec<i64>> = (0..n)
        .map(|j| {
            let mut e = vec![0; n];
            e[j] = 1;
            e
        })
        .collect();
    if n < 2 {
        return (b, t);
    }
    let (mut bstar, mut mu) = gram_schmidt(&b);
    let mut k = 1;
    let mut guard = 0;
    while k < n && guard < 100_000 {
        guard += 1;
        for j in (0..k).rev() {
            let q = mu[k][j].round();
            if q != 0.0 {
                let qi = q as i64;
                for r in 0..b[k].len() {
                    b[k][r] -= q * b[j][r];
                }
                for r in 0..n {
                    t[k][r] -= qi * t[j][r];
                }
                for i in 0..j {
                    mu[k][i] -= q * mu[j][i];
                }
                mu[k][j] -= q;
            }
        }
        let lhs = dot(&bstar[k], &bstar[k]);
        let rhs = (delta - mu[k][k - 1] * mu[k][k - 1]) * dot(&bstar[k - 1], &bstar[k - 1]);
        if lhs >= rhs {
            k += 1;
        } else {
            b.swap(k, k - 1);
            t.swap(k, k - 1);
            (bstar, mu) = gram_schmidt(&b);
            k = (k - 1).max(1);
        }
    }
    (b, t)
}

fn gram_schmidt(b: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = b.len();
    let mut bstar: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut mu = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut v = b[i].clone();
        for j in 0..i {
            let nj = dot(&bstar[j], &bstar[j]);
            mu[i][j] = if nj > 0.0 { dot(&b[i], &bstar[j]) / nj } else { 0.0 };
            for r in 0..v.len() {
                v[r] -= mu[i][j] * bstar[j][r];
            }
        }
        mu[i][i] = 1.0;
        bstar.push(v);
    }
    (bstar, mu)
}

/// `L` independent integer ECVs with small `aᵀMa`: the LLL basis, improved for
/// `L ≤ 4` by a greedy pass over all vectors with entries in `[-3, 3]`.
pub fn iflr_vectors(ctx: &ReceiverContext) -> Vec<Vec<i64>> {
    let m = ctx.rate_matrix();
    let l = m.rows();
    // aᵀMa = ‖Lᵀa‖², so reduce the columns of Lᵀ
    let chol = Cholesky::new(m).expect("rate matrix is positive definite");
    let (_, t) = lll_reduce(&chol.factor().transpose(), 0.75);
    if l > 4 {
        return t;
    }
    let mut pool: Vec<(f64, Vec<i64>)> = t.iter().map(|v| (m.quad_form_int(v), v.clone())).collect();
    let mut v = vec![-3i64; l];
    loop {
        let first = v.iter().find(|&&x| x != 0);
        if first.is_some_and(|&x| x > 0) {
            pool.push((m.quad_form_int(&v), v.clone()));
        }
        let mut i = 0;
        while i < l {
            v[i] += 1;
            if v[i] <= 3 {
                break;
            }
            v[i] = -3;
            i += 1;
        }
        if i == l {
            break;
        }
    }
    // greedy over a linear matroid minimizes the largest chosen weight
    pool.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut chosen: Vec<Vec<i64>> = Vec::with_capacity(l);
    for (_, cand) in pool {
        chosen.push(cand);
        if integer_rank(&chosen) < chosen.len() {
            chosen.pop();
        }
        if chosen.len() == l {
            break;
        }
    }
    let lll_max = t.iter().map(|v| m.quad_form_int(v)).fold(0.0, f64::max);
    let greedy_max = chosen.iter().map(|v| m.quad_form_int(v)).fold(0.0, f64::max);
    if greedy_max <= lll_max {
        chosen
    } else {
        t
    }
}

/// `Nt · min_l R(a_l)` over the `L` IFLR equations.
pub fn iflr_rate(ctx: &ReceiverContext, _cfg: &SearchConfig) -> f64 {
    let m = ctx.rate_matrix();
    let worst = iflr_vectors(ctx).iter().map(|v| m.quad_form_int(v)).fold(0.0, f64::max);
    ctx.nt as f64 * rate_from_form(worst)
}
