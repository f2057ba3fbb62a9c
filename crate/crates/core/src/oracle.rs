//! Exhaustive searches over bounded integer boxes.
//!
//! These are deliberately naive: every candidate in the box is visited in a
//! fixed order and ties keep the first one found, so results are
//! deterministic. Boxes are shrunk per instance to the region where a
//! positive rate is possible at all.

use serde::{Deserialize, Serialize};

use crate::channel::ReceiverContext;
use crate::coeff_opt::{GramU, UcmProblem};
use crate::error::{Error, Result};
use crate::ifmr::{IfmrResult, StageResult};
use crate::linalg::{dot, integer_rank};
use crate::rates::{dcm_rate, Factors};

/// Enumeration guard on the number of visited points.
pub const SPACE_LIMIT: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBound {
    pub factor_bound: i64,
    pub a_bound: i64,
    pub c_bound: i64,
}

impl OracleBound {
    pub fn new(factor_bound: i64, a_bound: i64, c_bound: i64) -> Result<Self> {
        if factor_bound < 1 || a_bound < 1 || c_bound < 1 {
            return Err(Error::InvalidConfig("oracle bounds must be at least 1".into()));
        }
        Ok(OracleBound { factor_bound, a_bound, c_bound })
    }

    /// Any stacked ECV with squared norm at least `1 + SNR·λ_max²` has rate 0,
    /// so no coordinate or factor beyond the largest `m` with
    /// `m² < 1 + SNR·λ_max²` can appear in a positive-rate solution.
    pub fn tightened(&self, ctx: &ReceiverContext) -> OracleBound {
        let cap = 1.0 + ctx.snr * ctx.lambda_max_sq();
        let mut m = cap.sqrt().floor() as i64;
        while m > 1 && (m * m) as f64 >= cap {
            m -= 1;
        }
        let m = m.max(1);
        OracleBound {
            factor_bound: self.factor_bound.min(m),
            a_bound: self.a_bound.min(m),
            c_bound: self.c_bound.min(m),
        }
    }
}

/// Calls `f` on every vector of length `n` with entries in `[-bound, bound]`,
/// first coordinate varying fastest.
fn for_each_in_box(n: usize, bound: i64, mut f: impl FnMut(&[i64])) {
    let mut v = vec![-bound; n];
    loop {
        f(&v);
        let mut i = 0;
        while i < n {
            v[i] += 1;
            if v[i] <= bound {
                break;
            }
            v[i] = -bound;
            i += 1;
        }
        if i == n {
            return;
        }
    }
}

fn box_size(n: usize, bound: i64) -> f64 {
    ((2 * bound + 1) as f64).powi(n as i32)
}

fn is_zero(v: &[i64]) -> bool {
    v.iter().all(|&x| x == 0)
}

/// Best factor pair for fixed `a`, `c` given the three scalars of the form
/// `d²·aa + 2de·ac + e²·cc`: the minimizing `(d, e)`, then the minimizing
/// vector not parallel to it. Returns the factors and the larger form.
fn best_factors(aa: f64, ac: f64, cc: f64, c_zero: bool, bound: i64) -> (Factors, f64) {
    if c_zero {
        return (Factors::INTERFERENCE_FREE, aa);
    }
    let form = |d: i64, e: i64| {
        let (d, e) = (d as f64, e as f64);
        d * d * aa + 2.0 * d * e * ac + e * e * cc
    };
    let mut first = (0, 0);
    let mut first_val = f64::INFINITY;
    for d in -bound..=bound {
        for e in -bound..=bound {
            if (d, e) == (0, 0) {
                continue;
            }
            let v = form(d, e);
            if v < first_val {
                first_val = v;
                first = (d, e);
            }
        }
    }
    let mut second = (0, 0);
    let mut second_val = f64::INFINITY;
    for d in -bound..=bound {
        for e in -bound..=bound {
            if (d, e) == (0, 0) || first.0 * e - first.1 * d == 0 {
                continue;
            }
            let v = form(d, e);
            if v < second_val {
                second_val = v;
                second = (d, e);
            }
        }
    }
    (Factors::new(first.0, first.1, second.0, second.1), second_val)
}

/// Exhaustive Step I: best independent factor pair with `|d|, |e| ≤ bound`
/// for the quadratic form of `u`.
pub fn brute_factor_pair(u: &GramU, bound: i64) -> (Factors, f64) {
    let m = u.matrix();
    best_factors(m[(0, 0)], m[(0, 1)], m[(1, 1)], false, bound)
}

/// Per-`c` data reused across all `a`.
struct UcmEntry {
    c: Vec<i64>,
    /// `M_ac c`
    cross: Vec<f64>,
    cc: f64,
    zero: bool,
}

fn ucm_table(ctx: &ReceiverContext, bound: i64) -> Vec<UcmEntry> {
    let mut out = Vec::new();
    for_each_in_box(ctx.lc, bound, |c| {
        let cf: Vec<f64> = c.iter().map(|&x| x as f64).collect();
        out.push(UcmEntry {
            c: c.to_vec(),
            cross: ctx.m_cross().matvec(&cf),
            cc: ctx.m_interference().quad_form(&cf),
            zero: is_zero(c),
        });
    });
    out
}

/// Best `(c, factors)` and objective for one DCM vector.
fn best_for_a(ctx: &ReceiverContext, a: &[i64], table: &[UcmEntry], factor_bound: i64) -> (Vec<i64>, Factors, f64) {
    let af: Vec<f64> = a.iter().map(|&x| x as f64).collect();
    let aa = ctx.m_desired().quad_form(&af);
    let mut best: Option<(usize, Factors, f64)> = None;
    for (i, entry) in table.iter().enumerate() {
        let ac = dot(&af, &entry.cross);
        let (f, obj) = best_factors(aa, ac, entry.cc, entry.zero, factor_bound);
        if best.as_ref().is_none_or(|b| obj < b.2) {
            best = Some((i, f, obj));
        }
    }
    let (i, f, obj) = best.expect("UCM box is never empty");
    (table[i].c.clone(), f, obj)
}

fn check_space(points: f64) -> Result<()> {
    if points > SPACE_LIMIT {
        return Err(Error::SearchSpaceTooLarge { points, limit: SPACE_LIMIT });
    }
    Ok(())
}

fn stage_result(ctx: &ReceiverContext, a: Vec<i64>, c: Vec<i64>, factors: Factors, obj: f64) -> Result<StageResult> {
    let rate = dcm_rate(ctx, factors, &a, &c)?;
    Ok(StageResult { g: a, c, factors, rate, iterations: 0, epsilon_trace: vec![obj], converged: true })
}

/// Exact optimum of one sequential stage over the box: the DCM vector must
/// be nonzero and independent of `prev_g`.
pub fn brute_stage(ctx: &ReceiverContext, prev_g: &[Vec<i64>], b: OracleBound) -> Result<StageResult> {
    let b = b.tightened(ctx);
    let fb = (2 * b.factor_bound + 1) as f64;
    check_space(box_size(ctx.nt, b.a_bound) * box_size(ctx.lc, b.c_bound) * fb * fb)?;
    let table = ucm_table(ctx, b.c_bound);
    let mut best: Option<(Vec<i64>, Vec<i64>, Factors, f64)> = None;
    let mut rows = prev_g.to_vec();
    for_each_in_box(ctx.nt, b.a_bound, |a| {
        if is_zero(a) {
            return;
        }
        rows.push(a.to_vec());
        let independent = integer_rank(&rows) == prev_g.len() + 1;
        rows.pop();
        if !independent {
            return;
        }
        let (c, f, obj) = best_for_a(ctx, a, &table, b.factor_bound);
        if best.as_ref().is_none_or(|x| obj < x.3) {
            best = Some((a.to_vec(), c, f, obj));
        }
    });
    let (a, c, f, obj) = best.ok_or(Error::NoCandidate)?;
    stage_result(ctx, a, c, f, obj)
}

/// Exact optimum of the joint selection of `Nt ≤ 2` DCMs over the box,
/// enumerating every independent pair of DCM vectors explicitly.
pub fn brute_joint(ctx: &ReceiverContext, b: OracleBound) -> Result<IfmrResult> {
    if ctx.nt > 2 {
        return Err(Error::DimensionMismatch("joint oracle supports at most 2 desired streams".into()));
    }
    if ctx.nt == 1 {
        let st = brute_stage(ctx, &[], b)?;
        return Ok(IfmrResult { sum_rate: st.rate, rate_total: st.rate, stages: vec![st] });
    }
    let b = b.tightened(ctx);
    let fb = (2 * b.factor_bound + 1) as f64;
    let per_a = box_size(ctx.nt, b.a_bound);
    check_space(per_a * box_size(ctx.lc, b.c_bound) * fb * fb + per_a * per_a)?;
    let table = ucm_table(ctx, b.c_bound);
    let mut cands: Vec<(Vec<i64>, Vec<i64>, Factors, f64)> = Vec::new();
    for_each_in_box(ctx.nt, b.a_bound, |a| {
        if !is_zero(a) {
            let (c, f, obj) = best_for_a(ctx, a, &table, b.factor_bound);
            cands.push((a.to_vec(), c, f, obj));
        }
    });
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..cands.len() {
        for j in 0..cands.len() {
            let (x, y) = (&cands[i].0, &cands[j].0);
            if x[0] * y[1] - x[1] * y[0] == 0 {
                continue;
            }
            let obj = cands[i].3.max(cands[j].3);
            if best.is_none_or(|bb| obj < bb.2) {
                best = Some((i, j, obj));
            }
        }
    }
    let (i, j, _) = best.ok_or(Error::NoCandidate)?;
    let mut stages = Vec::with_capacity(2);
    for idx in [i, j] {
        let (a, c, f, obj) = cands[idx].clone();
        stages.push(stage_result(ctx, a, c, f, obj)?);
    }
    let min = stages.iter().map(|s| s.rate).fold(f64::INFINITY, f64::min);
    let rate_total = stages.iter().map(|s| s.rate).sum();
    Ok(IfmrResult { sum_rate: 2.0 * min, rate_total, stages })
}

/// Sequential exhaustive stages, `t = 1..Nt`.
pub fn brute_sequential(ctx: &ReceiverContext, b: OracleBound) -> Result<IfmrResult> {
    let mut prev: Vec<Vec<i64>> = Vec::new();
    let mut stages = Vec::new();
    for _ in 0..ctx.nt {
        let st = brute_stage(ctx, &prev, b)?;
        prev.push(st.g.clone());
        stages.push(st);
    }
    let min = stages.iter().map(|s| s.rate).fold(f64::INFINITY, f64::min);
    let rate_total = stages.iter().map(|s| s.rate).sum();
    Ok(IfmrResult { sum_rate: ctx.nt as f64 * min, rate_total, stages })
}

/// Exact integer optimum of `min_c max_l cᵀQ_l c − 2q_lᵀc + r_l` over the box.
pub fn brute_minmax_quadratic(p: &UcmProblem, c_bound: i64) -> Result<(Vec<i64>, f64)> {
    let n = p.dim();
    if n > 4 {
        return Err(Error::DimensionMismatch(format!("exhaustive min-max supports Lc ≤ 4, got {n}")));
    }
    check_space(box_size(n, c_bound))?;
    let mut best: Option<(Vec<i64>, f64)> = None;
    for_each_in_box(n, c_bound, |c| {
        let v = p.objective_int(c);
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((c.to_vec(), v));
        }
    });
    Ok(best.expect("box is never empty"))
}
