//! Randomized invariant checks shared by the `selftest` command and the
//! acceptance tests. Each check draws its instances from a seeded ChaCha
//! stream and counts failures instead of panicking.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::{ChannelSet, ReceiverContext, Topology};
use crate::coeff_opt::{build_u, lemma2_radius, solve_ucm_sdp, step1_factors, GramU, SearchConfig, UcmProblem};
use crate::ifmr::run_receiver;
use crate::linalg::{eig_sym, Mat};
use crate::oracle::{brute_factor_pair, brute_joint, brute_minmax_quadratic, brute_sequential, OracleBound};
use crate::rates::{dcm_rate, Factors};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub instances: usize,
    pub failures: usize,
    /// First failure, or a summary statistic when everything passed.
    pub detail: String,
    pub elapsed_s: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.instances > 0
    }
}

struct Tally {
    name: &'static str,
    start: Instant,
    instances: usize,
    failures: usize,
    detail: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally { name, start: Instant::now(), instances: 0, failures: 0, detail: None }
    }

    fn record(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.instances += 1;
        if !ok {
            self.failures += 1;
            if self.detail.is_none() {
                self.detail = Some(format!("instance {}: {}", self.instances - 1, msg()));
            }
        }
    }

    fn finish(self, summary: String) -> Check {
        Check {
            name: self.name,
            instances: self.instances,
            failures: self.failures,
            detail: self.detail.unwrap_or(summary),
            elapsed_s: self.start.elapsed().as_secs_f64(),
        }
    }
}

fn random_nonzero(rng: &mut ChaCha8Rng, n: usize, bound: i64) -> Vec<i64> {
    loop {
        let v: Vec<i64> = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        if v.iter().any(|&x| x != 0) {
            return v;
        }
    }
}

fn random_factors(rng: &mut ChaCha8Rng, bound: i64) -> Factors {
    loop {
        let v: [i64; 4] = std::array::from_fn(|_| rng.random_range(-bound..=bound));
        let f = Factors::new(v[0], v[1], v[2], v[3]);
        if f.det() != 0 {
            return f;
        }
    }
}

fn random_context(rng: &mut ChaCha8Rng, k: usize, n: usize, snr_db: f64) -> ReceiverContext {
    let cs = ChannelSet::generate(&Topology::symmetric(k, n, n), rng.random()).expect("valid topology");
    ReceiverContext::new(&cs, rng.random_range(0..k), 10f64.powf(snr_db / 10.0)).expect("valid receiver")
}

/// `I − xxᵀ/(xᵀx)` is positive semidefinite for every nonzero `x`.
pub fn projection_psd(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("projection_psd");
    let mut worst = f64::INFINITY;
    for _ in 0..instances {
        let n = rng.random_range(1..=6);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let p = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - x[i] * x[j] / xx);
        let min = eig_sym(&p).map(|e| e.min()).unwrap_or(f64::NEG_INFINITY);
        worst = worst.min(min);
        t.record(min >= -1e-10, || format!("min eigenvalue {min:e}"));
    }
    t.finish(format!("smallest eigenvalue {worst:e}"))
}

/// `U` is positive definite for nonzero `a`, `c` (K = 3, N ∈ {1, 2},
/// SNR ∈ {0, 10, 20} dB).
pub fn gram_positive_definite(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("gram_positive_definite");
    let mut worst = f64::INFINITY;
    for i in 0..instances {
        let n = 1 + i % 2;
        let snr_db = [0.0, 10.0, 20.0][(i / 2) % 3];
        let ctx = random_context(&mut rng, 3, n, snr_db);
        let a = random_nonzero(&mut rng, ctx.nt, 3);
        let c = random_nonzero(&mut rng, ctx.lc, 3);
        match build_u(&ctx, &a, &c) {
            Ok(u) => {
                let min = u.min_eigenvalue();
                worst = worst.min(min);
                t.record(min > 0.0, || format!("min eigenvalue {min:e}"));
            }
            Err(e) => t.record(false, || e.to_string()),
        }
    }
    t.finish(format!("smallest eigenvalue {worst:e}"))
}

/// Every alternating-search run has a non-increasing `max_l f_l` trace and stops
/// within the iteration cap.
pub fn monotone_convergence(instances: usize, seed: u64, n: usize, snr_db: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("monotone_convergence");
    let cfg = SearchConfig::default();
    let mut max_iters = 0;
    for _ in 0..instances {
        let ctx = random_context(&mut rng, 3, n, snr_db);
        match run_receiver(&ctx, &cfg) {
            Ok(res) => {
                let bad = res.stages.iter().find(|s| {
                    s.iterations > cfg.max_iters || s.epsilon_trace.windows(2).any(|w| w[1] > w[0] + 1e-9)
                });
                max_iters = res.stages.iter().map(|s| s.iterations).fold(max_iters, usize::max);
                t.record(bad.is_none(), || format!("trace {:?}", bad.map(|s| &s.epsilon_trace)));
            }
            Err(e) => t.record(false, || e.to_string()),
        }
    }
    t.finish(format!("at most {max_iters} iterations"))
}

/// Joint and sequential exhaustive DCM selection reach the same minimum
/// rate (K = 2, Nt = [2, 1], Nr = [2, 2], bounds (2, 2, 2)).
pub fn sequential_matches_joint(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("sequential_matches_joint");
    let topo = Topology { k: 2, nt: vec![2, 1], nr: vec![2, 2], rho2: vec![vec![1.0; 2]; 2] };
    let bound = OracleBound { factor_bound: 2, a_bound: 2, c_bound: 2 };
    let mut positive = 0;
    for i in 0..instances {
        let cs = ChannelSet::generate(&topo, rng.random()).expect("valid topology");
        let snr = 10f64.powf([0.0, 10.0, 20.0][i % 3] / 10.0);
        let ctx = ReceiverContext::new(&cs, 0, snr).expect("valid receiver");
        match (brute_joint(&ctx, bound), brute_sequential(&ctx, bound)) {
            (Ok(j), Ok(s)) => {
                let (a, b) = (j.min_rate(), s.min_rate());
                positive += usize::from(a > 0.0);
                t.record((a - b).abs() <= 1e-12, || format!("joint {a} vs sequential {b}"));
            }
            (Err(e), _) | (_, Err(e)) => t.record(false, || e.to_string()),
        }
    }
    t.finish(format!("{positive} instances with a positive rate"))
}

/// Any DCM vector with `‖a‖²` at or beyond the radius has rate 0.
pub fn radius_bound(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("radius_bound");
    for i in 0..instances {
        let snr_db = [0.0, 10.0, 20.0][i % 3];
        let ctx = random_context(&mut rng, 3, 2, snr_db);
        let f = random_factors(&mut rng, 3);
        let c: Vec<i64> = (0..ctx.lc).map(|_| rng.random_range(-2..=2)).collect();
        let r = lemma2_radius(&ctx, f, &c).max(0.0);
        let v = random_nonzero(&mut rng, ctx.nt, 3);
        let vv: i64 = v.iter().map(|x| x * x).sum();
        let mut m = ((r / vv as f64).sqrt().ceil() as i64).max(1);
        while ((m * m * vv) as f64) < r {
            m += 1;
        }
        let a: Vec<i64> = v.iter().map(|x| m * x).collect();
        match dcm_rate(&ctx, f, &a, &c) {
            Ok(rate) => t.record(rate == 0.0, || format!("rate {rate} at |a|² = {} ≥ {r}", m * m * vv)),
            Err(e) => t.record(false, || e.to_string()),
        }
    }
    t.finish("all rates zero".into())
}

/// Gauss-reduced factor pairs match exhaustive search over `|d|, |e| ≤ 10`.
pub fn step1_exactness(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("step1_gauss_exact");
    let mut done = 0;
    while done < instances {
        let g = Mat::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
        let Ok(u) = GramU::new(g.tr_matmul(&g).add_diag(0.2)) else { continue };
        let (_, obj) = step1_factors(&u);
        // both minimizers lie inside the box once sqrt(obj / λ_min) ≤ 10
        if (obj / u.min_eigenvalue()).sqrt() > 10.0 {
            continue;
        }
        done += 1;
        let (_, brute) = brute_factor_pair(&u, 10);
        t.record((obj - brute).abs() <= 1e-12 * brute.max(1.0), || format!("gauss {obj} vs exhaustive {brute}"));
    }
    t.finish("all objectives equal".into())
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    g.tr_matmul(&g).add_diag(0.5)
}

/// The SDP relaxation never exceeds the integer min-max optimum.
pub fn sdp_lower_bound(instances: usize, seed: u64, lc: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::new("sdp_relaxation_bound");
    let cfg = SearchConfig::default();
    let mut worst = f64::NEG_INFINITY;
    while t.instances < instances {
        let quad = [random_psd(&mut rng, lc), random_psd(&mut rng, lc)];
        let lin = [0, 1].map(|_| (0..lc).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>());
        let offset = [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)];
        let p = UcmProblem::new(quad, lin, offset).expect("PSD by construction");
        // any c beating c = 0 satisfies λ‖c‖² − 2‖q‖‖c‖ ≤ max r − min r
        let lam = p.quad.iter().map(|q| eig_sym(q).map(|e| e.min()).unwrap_or(0.0)).fold(f64::INFINITY, f64::min);
        let qn = p.lin.iter().map(|q| q.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max);
        let dr = (p.offset[0] - p.offset[1]).abs();
        let bound = ((qn + (qn * qn + lam * dr).sqrt()) / lam).ceil() as i64;
        let (sdp, brute) = (solve_ucm_sdp(&p, &cfg), brute_minmax_quadratic(&p, bound.max(1)));
        match (sdp, brute) {
            (Ok(s), Ok((_, b))) => {
                worst = worst.max(s.epsilon - b);
                t.record(s.epsilon <= b + 1e-5, || format!("sdp {} vs integer {b}", s.epsilon));
            }
            (Err(e), _) | (_, Err(e)) => t.record(false, || e.to_string()),
        }
    }
    t.finish(format!("largest sdp − integer {worst:.3e}"))
}

/// The suite run by the `selftest` command.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        projection_psd(1000, seed),
        gram_positive_definite(1000, seed),
        monotone_convergence(50, seed, 2, 15.0),
        sequential_matches_joint(20, seed),
        radius_bound(500, seed),
        step1_exactness(200, seed),
        sdp_lower_bound(30, seed, 3),
    ]
}
