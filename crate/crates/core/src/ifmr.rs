//! Alternating search over Steps I–III for one DCM, repeated over `Nt` stages
//! with each new DCM vector independent of the earlier ones.

use serde::{Deserialize, Serialize};

use crate::channel::ReceiverContext;
use crate::coeff_opt::{
    build_u, build_ucm_problem, rounding_candidates, solve_ucm_sdp, step1_factors, step3_dcm,
    SearchConfig,
};
use crate::error::{Error, Result};
use crate::linalg::{eig_sym, integer_rank};
use crate::rates::{dcm_rate, max_form, rate_from_form, Factors};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    /// Chosen DCM vector `g_t`.
    pub g: Vec<i64>,
    pub c: Vec<i64>,
    pub factors: Factors,
    pub rate: f64,
    pub iterations: usize,
    /// `max_l f_l` after each full iteration.
    pub epsilon_trace: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IfmrResult {
    pub stages: Vec<StageResult>,
    /// `Nt · min_t rate_t`.
    pub sum_rate: f64,
    /// `Σ_t rate_t`, kept for comparison with the min convention.
    pub rate_total: f64,
}

impl IfmrResult {
    pub fn min_rate(&self) -> f64 {
        self.stages.iter().map(|s| s.rate).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_iterations(&self) -> f64 {
        let n = self.stages.len().max(1) as f64;
        self.stages.iter().map(|s| s.iterations as f64).sum::<f64>() / n
    }

    pub fn dcm_vectors(&self) -> Vec<Vec<i64>> {
        self.stages.iter().map(|s| s.g.clone()).collect()
    }
}

fn is_zero(v: &[i64]) -> bool {
    v.iter().all(|&x| x == 0)
}

/// Best factor pair for `(a, c)` and the resulting objective.
fn best_factors(ctx: &ReceiverContext, a: &[i64], c: &[i64]) -> Result<(Factors, f64)> {
    if is_zero(c) {
        Ok((Factors::INTERFERENCE_FREE, max_form(ctx, Factors::INTERFERENCE_FREE, a, c)))
    } else {
        Ok(step1_factors(&build_u(ctx, a, c)?))
    }
}

fn independent_of(prev_g: &[Vec<i64>], a: &[i64]) -> bool {
    let mut rows = prev_g.to_vec();
    rows.push(a.to_vec());
    !is_zero(a) && integer_rank(&rows) == prev_g.len() + 1
}

/// Runs Steps I–III from `(a0, c0)` until the stage rate moves by less than
/// `cfg.delta` or `cfg.max_iters` iterations have run.
pub fn run_stage(
    ctx: &ReceiverContext,
    prev_g: &[Vec<i64>],
    cfg: &SearchConfig,
    init: (Vec<i64>, Vec<i64>),
) -> Result<StageResult> {
    let (mut a, mut c) = init;
    if a.len() != ctx.nt || c.len() != ctx.lc {
        return Err(Error::DimensionMismatch(format!(
            "initial a has length {} (want {}), c has length {} (want {})",
            a.len(),
            ctx.nt,
            c.len(),
            ctx.lc
        )));
    }
    if prev_g.len() >= ctx.nt {
        return Err(Error::DegenerateInput("all stages already chosen".into()));
    }
    if !independent_of(prev_g, &a) {
        return Err(Error::InitDegenerate);
    }

    let (mut factors, mut eps) = best_factors(ctx, &a, &c)?;
    let mut rate_prev = rate_from_form(eps);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;

        // Step I
        let (f, obj) = best_factors(ctx, &a, &c)?;
        if obj <= eps {
            factors = f;
            eps = obj;
        }

        // Step II: each rounding candidate, and c = 0, is scored with its own
        // best factor pair
        if ctx.lc > 0 {
            let p = build_ucm_problem(ctx, &a, factors)?;
            match solve_ucm_sdp(&p, cfg) {
                Ok(sol) => {
                    let mut cands = rounding_candidates(&sol.c);
                    cands.push(vec![0; ctx.lc]);
                    for cand in cands {
                        let (f, obj) = best_factors(ctx, &a, &cand)?;
                        if obj < eps {
                            eps = obj;
                            factors = f;
                            c = cand;
                        }
                    }
                }
                Err(Error::SolverStall { .. }) => {}
                Err(e) => return Err(e),
            }
        }

        // Step III
        match step3_dcm(ctx, factors, &c, prev_g, cfg) {
            Ok((cand, obj)) => {
                if obj <= eps {
                    eps = obj;
                    a = cand;
                }
            }
            Err(Error::NoCandidate) => {}
            Err(e) => return Err(e),
        }

        trace.push(eps);
        let rate = rate_from_form(eps);
        if (rate - rate_prev).abs() < cfg.delta {
            converged = true;
            break;
        }
        rate_prev = rate;
    }

    if is_zero(&c) {
        factors = Factors::INTERFERENCE_FREE;
    }
    let rate = dcm_rate(ctx, factors, &a, &c)?;
    Ok(StageResult { g: a, c, factors, rate, iterations, epsilon_trace: trace, converged })
}

/// Starting DCM vector for a stage: the rounded dominant right-singular
/// vector of `H_kk` scaled to unit max-entry, else the first unit vector
/// that keeps `prev_g` independent.
pub fn initial_dcm(ctx: &ReceiverContext, prev_g: &[Vec<i64>]) -> Result<Vec<i64>> {
    let nt = ctx.nt;
    let gram = ctx.hkk.tr_matmul(&ctx.hkk);
    let eig = eig_sym(&gram)?;
    let v = eig.vector(nt - 1);
    let peak = v.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
    if peak != 0.0 {
        let a: Vec<i64> = v.iter().map(|x| (x / peak).round() as i64).collect();
        if independent_of(prev_g, &a) {
            return Ok(a);
        }
    }
    for i in 0..nt {
        let mut e = vec![0; nt];
        e[i] = 1;
        if independent_of(prev_g, &e) {
            return Ok(e);
        }
    }
    Err(Error::InitDegenerate)
}

/// Starting points for one stage: `initial_dcm` and, with `multi_start`,
/// every unit vector that keeps `prev_g` independent; each paired with
/// `c = 1` and `c = 0`.
pub fn starting_points(ctx: &ReceiverContext, prev_g: &[Vec<i64>], cfg: &SearchConfig) -> Result<Vec<(Vec<i64>, Vec<i64>)>> {
    let mut dcms = vec![initial_dcm(ctx, prev_g)?];
    if !cfg.multi_start {
        return Ok(vec![(dcms.remove(0), vec![1; ctx.lc])]);
    }
    for i in 0..ctx.nt {
        let mut e = vec![0; ctx.nt];
        e[i] = 1;
        if independent_of(prev_g, &e) && !dcms.contains(&e) {
            dcms.push(e);
        }
    }
    let mut out = Vec::with_capacity(2 * dcms.len());
    for a in dcms {
        out.push((a.clone(), vec![1; ctx.lc]));
        if ctx.lc > 0 {
            out.push((a, vec![0; ctx.lc]));
        }
    }
    Ok(out)
}

/// All `Nt` stages at receiver `k`.
pub fn run_receiver(ctx: &ReceiverContext, cfg: &SearchConfig) -> Result<IfmrResult> {
    let mut prev: Vec<Vec<i64>> = Vec::with_capacity(ctx.nt);
    let mut stages: Vec<StageResult> = Vec::with_capacity(ctx.nt);
    for _ in 0..ctx.nt {
        let mut best: Option<StageResult> = None;
        for init in starting_points(ctx, &prev, cfg)? {
            let stage = run_stage(ctx, &prev, cfg, init)?;
            if best.as_ref().is_none_or(|b| stage.rate > b.rate) {
                best = Some(stage);
            }
        }
        let stage = best.expect("at least one starting point");
        prev.push(stage.g.clone());
        stages.push(stage);
    }
    let min = stages.iter().map(|s| s.rate).fold(f64::INFINITY, f64::min);
    let rate_total = stages.iter().map(|s| s.rate).sum();
    Ok(IfmrResult { sum_rate: ctx.nt as f64 * min, rate_total, stages })
}
