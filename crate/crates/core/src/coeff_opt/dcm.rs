//! Step III: the DCM vector `a` for fixed factors and UCM vector.
//!
//! Relaxing `a` to real values, each `f_l` is a convex quadratic in `a` with
//! Hessian `2 d_l² M_aa`. The min-max minimizer lies on the path
//! `a(α) = (u(α)/v(α)) M_aa⁻¹ b`, `b = H_kkᵀ T H_k c`, with
//! `u(α) = α e1 d1 + (1−α) e2 d2` and `v(α) = α d1² + (1−α) d2²`.
//! The integer search then walks lines through that point along the
//! slowest-descent eigendirections of `M_aa`.

use std::collections::HashSet;

use crate::channel::ReceiverContext;
use crate::coeff_opt::SearchConfig;
use crate::error::{Error, Result};
use crate::linalg::{dot, eig_sym, integer_rank, norm_sq_int, Cholesky};
use crate::rates::{max_form, Factors};

/// Which branch produced the continuous minimizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CenterCase {
    /// `c = 0` (or no interferers): the minimizer is the origin.
    ZeroUcm,
    /// `α* = 0`: minimizing `f2` alone already satisfies `f1 ≤ f2`.
    Endpoint0,
    /// `α* = 1`: minimizing `f1` alone already satisfies `f1 ≥ f2`.
    Endpoint1,
    /// Interior `α*` found by bisection on `f1 − f2`.
    Interior,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcmCenter {
    pub alpha: f64,
    pub a: Vec<f64>,
    pub case: CenterCase,
}

/// Squared-norm threshold beyond which every `a` gives rate 0 for these
/// factors and this `c`.
///
/// From `M ⪰ I/(1 + SNR·λ_max²(Ĥ))`, `f_l ≥ 1` as soon as
/// `d_l²‖a‖² ≥ 1 + SNR·λ_max² − e_l²‖c‖²`; the smallest such bound over `l` wins.
/// An equation with `d_l = 0` either rules out every `a` (−∞) or none (+∞).
pub fn lemma2_radius(ctx: &ReceiverContext, factors: Factors, c: &[i64]) -> f64 {
    let cap = 1.0 + ctx.snr * ctx.lambda_max_sq();
    let cc = norm_sq_int(c);
    factors
        .rows()
        .iter()
        .map(|&(d, e)| {
            let slack = cap - (e * e) as f64 * cc;
            if d == 0 {
                if slack <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            } else {
                slack / (d * d) as f64
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Continuous min-max minimizer of `max(f1, f2)` over real `a`.
pub fn dcm_center(ctx: &ReceiverContext, factors: Factors, c: &[i64]) -> Result<DcmCenter> {
    factors.check()?;
    let nt = ctx.nt;
    if c.iter().all(|&x| x == 0) {
        return Ok(DcmCenter { alpha: 0.0, a: vec![0.0; nt], case: CenterCase::ZeroUcm });
    }
    let cf: Vec<f64> = c.iter().map(|&x| x as f64).collect();
    let b: Vec<f64> = ctx.m_cross().matvec(&cf).iter().map(|x| -x).collect();
    let m_aa = ctx.m_desired();
    let chol = Cholesky::new(m_aa).map_err(|_| Error::SingularCenter { min_eig: 0.0 })?;
    let y = chol.solve_vec(&b);
    // along the path a = s·y, f_l = β(d_l² s² − 2 d_l e_l s) + e_l² γ
    let beta = dot(&y, &b);
    let gamma = ctx.m_interference().quad_form(&cf);
    let f = |d: i64, e: i64, s: f64| {
        let (d, e) = (d as f64, e as f64);
        beta * (d * d * s * s - 2.0 * d * e * s) + e * e * gamma
    };
    let Factors { d1, e1, d2, e2 } = factors;
    let uv = |alpha: f64| {
        let u = alpha * (e1 * d1) as f64 + (1.0 - alpha) * (e2 * d2) as f64;
        let v = alpha * (d1 * d1) as f64 + (1.0 - alpha) * (d2 * d2) as f64;
        (u, v)
    };
    let min_eig = || eig_sym(m_aa).map(|e| e.min()).unwrap_or(0.0);
    let scaled = |s: f64| y.iter().map(|x| s * x).collect::<Vec<_>>();

    // one equation ignores `a`: the path is constant at the other's minimizer
    if d1 == 0 || d2 == 0 {
        let (dm, em) = if d1 != 0 { (d1, e1) } else { (d2, e2) };
        let s = em as f64 / dm as f64;
        let g = f(d1, e1, s) - f(d2, e2, s);
        let alpha = if d2 == 0 {
            if g >= 0.0 { 1.0 } else { 0.0 }
        } else if g <= 0.0 {
            0.0
        } else {
            1.0
        };
        let case = if alpha == 0.0 { CenterCase::Endpoint0 } else { CenterCase::Endpoint1 };
        return Ok(DcmCenter { alpha, a: scaled(s), case });
    }

    let lam = min_eig();
    let s_of = |alpha: f64| -> Result<f64> {
        let (u, v) = uv(alpha);
        if v * lam < 1e-10 {
            return Err(Error::SingularCenter { min_eig: v * lam });
        }
        Ok(u / v)
    };
    let g = |alpha: f64| -> Result<f64> {
        let s = s_of(alpha)?;
        Ok(f(d1, e1, s) - f(d2, e2, s))
    };
    if g(0.0)? <= 0.0 {
        return Ok(DcmCenter { alpha: 0.0, a: scaled(s_of(0.0)?), case: CenterCase::Endpoint0 });
    }
    if g(1.0)? >= 0.0 {
        return Ok(DcmCenter { alpha: 1.0, a: scaled(s_of(1.0)?), case: CenterCase::Endpoint1 });
    }
    // g is nonincreasing in α (derivative of a concave dual function)
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut mid = 0.5;
    for _ in 0..60 {
        mid = 0.5 * (lo + hi);
        let gm = g(mid)?;
        if gm.abs() <= 1e-9 {
            break;
        }
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DcmCenter { alpha: mid, a: scaled(s_of(mid)?), case: CenterCase::Interior })
}

/// Integer DCM vector minimizing `max_l f_l` among the integer points closest
/// to the descent lines, restricted to vectors that keep `prev_g ∪ {a}`
/// linearly independent. Visits at most `W·(2R+1)·Nt` points.
/// Returns the vector and its objective.
pub fn step3_dcm(
    ctx: &ReceiverContext,
    factors: Factors,
    c: &[i64],
    prev_g: &[Vec<i64>],
    cfg: &SearchConfig,
) -> Result<(Vec<i64>, f64)> {
    let nt = ctx.nt;
    let center = match dcm_center(ctx, factors, c) {
        Ok(cent) => cent.a,
        Err(Error::SingularCenter { .. }) => vec![0.0; nt],
        Err(e) => return Err(e),
    };
    let eig = eig_sym(ctx.m_desired())?;
    let lines = cfg.lines.unwrap_or(nt).min(nt);
    let radius = lemma2_radius(ctx, factors, c);
    let reach = if radius.is_infinite() && radius > 0.0 {
        cfg.r_max
    } else {
        cfg.r_max.min(radius.max(0.0).sqrt().ceil() as usize)
    } as i64;

    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut rows: Vec<Vec<i64>> = prev_g.to_vec();
    let mut best: Option<(Vec<i64>, f64)> = None;
    let mut consider = |a: Vec<i64>| {
        if a.iter().all(|&x| x == 0) || !seen.insert(a.clone()) {
            return;
        }
        rows.push(a);
        let independent = integer_rank(&rows) == prev_g.len() + 1;
        let a = rows.pop().expect("just pushed");
        if !independent {
            return;
        }
        let obj = max_form(ctx, factors, &a, c);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((a, obj));
        }
    };
    for w in 0..lines {
        let dir = eig.vector(w);
        // points of the line where coordinate i crosses an integer within
        // `reach` of the center, remaining coordinates rounded
        for i in 0..nt {
            if dir[i].abs() < 1e-12 {
                continue;
            }
            let base = center[i].round() as i64;
            for m in base - reach..=base + reach {
                let t = (m as f64 - center[i]) / dir[i];
                let a: Vec<i64> = (0..nt)
                    .map(|j| if j == i { m } else { (center[j] + t * dir[j]).round() as i64 })
                    .collect();
                consider(a);
            }
        }
    }
    best.ok_or(Error::NoCandidate)
}
