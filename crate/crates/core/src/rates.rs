//! Computation rates of integer equations and of DCMs recovered from two of them.
//!
//! All logarithms are base 2, so rates are in bit per channel use.

use serde::{Deserialize, Serialize};

use crate::channel::ReceiverContext;
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Equation coefficient vector. Never all-zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ecv(Vec<i64>);

impl Ecv {
    pub fn new(coeffs: Vec<i64>) -> Result<Self> {
        if coeffs.iter().all(|&x| x == 0) {
            return Err(Error::DegenerateInput("equation coefficient vector is all-zero".into()));
        }
        Ok(Ecv(coeffs))
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<i64> {
        self.0
    }
}

/// Coefficient factors `(d1, e1)` and `(d2, e2)` of the two equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Factors {
    pub d1: i64,
    pub e1: i64,
    pub d2: i64,
    pub e2: i64,
}

impl Factors {
    pub const fn new(d1: i64, e1: i64, d2: i64, e2: i64) -> Self {
        Factors { d1, e1, d2, e2 }
    }

    /// Factors used whenever the UCM vector is zero or absent: both equations
    /// collapse onto `[a; 0]`.
    pub const INTERFERENCE_FREE: Factors = Factors::new(1, 0, 1, 1);

    pub fn det(&self) -> i128 {
        self.d1 as i128 * self.e2 as i128 - self.d2 as i128 * self.e1 as i128
    }

    pub fn rows(&self) -> [(i64, i64); 2] {
        [(self.d1, self.e1), (self.d2, self.e2)]
    }

    pub fn check(&self) -> Result<()> {
        if self.det() == 0 {
            return Err(Error::DegenerateFactors { d1: self.d1, e1: self.e1, d2: self.d2, e2: self.e2 });
        }
        Ok(())
    }
}

/// A DCM together with the two equations used to recover it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationPair {
    pub factors: Factors,
    pub a: Vec<i64>,
    pub c: Vec<i64>,
    pub rate: f64,
}

impl EquationPair {
    pub fn new(ctx: &ReceiverContext, factors: Factors, a: Vec<i64>, c: Vec<i64>) -> Result<Self> {
        let rate = dcm_rate(ctx, factors, &a, &c)?;
        Ok(EquationPair { factors, a, c, rate })
    }
}

/// `log⁺(1/q)` in bits: the rate of an equation whose effective noise
/// quadratic form is `q`.
#[inline]
pub fn rate_from_form(q: f64) -> f64 {
    if q >= 1.0 {
        0.0
    } else if q <= 0.0 {
        f64::INFINITY
    } else {
        -q.log2()
    }
}

/// Projection vector `b = (I/SNR + ĤĤᵀ)⁻¹ Ĥ a`.
pub fn projection_vector(ctx: &ReceiverContext, a: &Ecv) -> Vec<f64> {
    assert_eq!(a.0.len(), ctx.l, "projection_vector: ECV length must be L");
    let ha = ctx.hhat.matvec_int(&a.0);
    ctx.kernel().solve_vec(&ha)
}

/// `aᵀ (I − Ĥᵀ (I/SNR + ĤĤᵀ)⁻¹ Ĥ) a`.
pub fn equation_form(ctx: &ReceiverContext, a: &[i64]) -> f64 {
    assert_eq!(a.len(), ctx.l, "equation_form: ECV length must be L");
    ctx.rate_matrix().quad_form_int(a)
}

pub fn equation_rate(ctx: &ReceiverContext, a: &Ecv) -> f64 {
    rate_from_form(equation_form(ctx, &a.0))
}

/// The quadratic form of the stacked ECV `[d·a; e·c]`, expanded blockwise:
/// `d² aᵀM_aa a + 2de aᵀM_ac c + e² cᵀM_cc c`.
pub fn stacked_form(ctx: &ReceiverContext, d: i64, e: i64, a: &[i64], c: &[i64]) -> f64 {
    let (d, e) = (d as f64, e as f64);
    let mut q = 0.0;
    if d != 0.0 {
        q += d * d * ctx.m_desired().quad_form_int(a);
    }
    if e != 0.0 && !c.is_empty() {
        q += e * e * ctx.m_interference().quad_form_int(c);
        if d != 0.0 {
            q += 2.0 * d * e * ctx.m_cross().bilinear_int(a, c);
        }
    }
    q
}

/// Same as [`stacked_form`] for a real-valued DCM vector.
pub fn stacked_form_real(ctx: &ReceiverContext, d: i64, e: i64, a: &[f64], c: &[i64]) -> f64 {
    let (d, e) = (d as f64, e as f64);
    let mut q = d * d * ctx.m_desired().quad_form(a);
    if e != 0.0 && !c.is_empty() {
        let cf: Vec<f64> = c.iter().map(|&x| x as f64).collect();
        q += e * e * ctx.m_interference().quad_form(&cf);
        q += 2.0 * d * e * dot(a, &ctx.m_cross().matvec(&cf));
    }
    q
}

/// `f_l` written out literally from the channel matrices:
/// `d²aᵀa + e²cᵀc − (d H_kk a + e H_k c)ᵀ (I/SNR + ĤĤᵀ)⁻¹ (d H_kk a + e H_k c)`.
pub fn f_l(ctx: &ReceiverContext, d: i64, e: i64, a: &[i64], c: &[i64]) -> f64 {
    let (df, ef) = (d as f64, e as f64);
    let mut y = ctx.hkk.matvec_int(a);
    for v in &mut y {
        *v *= df;
    }
    if !c.is_empty() {
        let hc = ctx.hk.matvec_int(c);
        for (v, w) in y.iter_mut().zip(hc) {
            *v += ef * w;
        }
    }
    let t_y = ctx.kernel().solve_vec(&y);
    let aa: f64 = a.iter().map(|&x| (x * x) as f64).sum();
    let cc: f64 = c.iter().map(|&x| (x * x) as f64).sum();
    df * df * aa + ef * ef * cc - dot(&y, &t_y)
}

/// Largest of the two equation forms; the objective the alternating search minimizes.
/// An all-zero equation (possible only when `c = 0` and `d_l = 0`) contributes 0.
pub fn max_form(ctx: &ReceiverContext, factors: Factors, a: &[i64], c: &[i64]) -> f64 {
    factors
        .rows()
        .iter()
        .map(|&(d, e)| stacked_form(ctx, d, e, a, c))
        .fold(0.0, f64::max)
}

/// Rate of recovering the DCM `aᵀx_k` from the equations `[d_l·a; e_l·c]`, l = 1, 2.
pub fn dcm_rate(ctx: &ReceiverContext, factors: Factors, a: &[i64], c: &[i64]) -> Result<f64> {
    factors.check()?;
    if a.len() != ctx.nt || c.len() != ctx.lc {
        return Err(Error::DimensionMismatch(format!(
            "a has length {} (want {}), c has length {} (want {})",
            a.len(),
            ctx.nt,
            c.len(),
            ctx.lc
        )));
    }
    if a.iter().all(|&x| x == 0) {
        return Err(Error::DegenerateInput("DCM vector a is all-zero".into()));
    }
    let c_zero = c.iter().all(|&x| x == 0);
    let mut worst: f64 = 0.0;
    for (d, e) in factors.rows() {
        if d == 0 && (e == 0 || c_zero) {
            return Err(Error::DegenerateInput(format!(
                "stacked ECV [{d}·a; {e}·c] is all-zero"
            )));
        }
        worst = worst.max(stacked_form(ctx, d, e, a, c));
    }
    Ok(rate_from_form(worst))
}
