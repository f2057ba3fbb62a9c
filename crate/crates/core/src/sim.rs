//! Seeded Monte Carlo engine: achievable rate, outage, throughput and
//! iteration statistics over an SNR grid.
//!
//! Trial `i` draws its channel from ChaCha stream `i` of the configured seed
//! and reuses it at every SNR point. Per-trial results are collected in trial
//! order and reduced sequentially, so the output does not depend on the
//! thread count.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{iflr_rate, mmse_rate, zf_rate};
use crate::channel::{ChannelSet, ReceiverContext, Topology};
use crate::coeff_opt::SearchConfig;
use crate::error::{Error, Result};
use crate::ifmr::run_receiver;
use crate::oracle::{brute_sequential, OracleBound};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ifmr,
    Iflr,
    Mmse,
    Zf,
    Oracle,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ifmr => "ifmr",
            Scheme::Iflr => "iflr",
            Scheme::Mmse => "mmse",
            Scheme::Zf => "zf",
            Scheme::Oracle => "oracle",
        }
    }
}

/// Antenna count shared by all users, or one entry per user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Antennas {
    Same(usize),
    PerUser(Vec<usize>),
}

impl Antennas {
    fn expand(&self, k: usize) -> Vec<usize> {
        match self {
            Antennas::Same(n) => vec![*n; k],
            Antennas::PerUser(v) => v.clone(),
        }
    }
}

/// Link variance shared by all links, or the full `K × K` matrix
/// (`rho2[tx][rx]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Variance {
    Same(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub k: usize,
    pub nt: Antennas,
    pub nr: Antennas,
    pub rho2: Variance,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub search: SearchConfig,
    /// R_t for outage and throughput, and the level for crossing SNRs.
    pub target_rate: f64,
    /// R_t values swept by the throughput experiment.
    pub target_rate_grid: Vec<f64>,
    pub oracle: OracleBound,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            k: 3,
            nt: Antennas::Same(2),
            nr: Antennas::Same(2),
            rho2: Variance::Same(1.0),
            snr_grid_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            trials: 1000,
            seed: 1,
            schemes: vec![Scheme::Ifmr, Scheme::Iflr, Scheme::Mmse, Scheme::Zf],
            search: SearchConfig::default(),
            target_rate: 1.0,
            target_rate_grid: Vec::new(),
            oracle: OracleBound { factor_bound: 3, a_bound: 3, c_bound: 2 },
        }
    }
}

impl SimConfig {
    pub fn topology(&self) -> Topology {
        let rho2 = match &self.rho2 {
            Variance::Same(v) => vec![vec![*v; self.k]; self.k],
            Variance::Matrix(m) => m.clone(),
        };
        Topology { k: self.k, nt: self.nt.expand(self.k), nr: self.nr.expand(self.k), rho2 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::InvalidConfig(format!("{key}: {msg}")));
        if self.k == 0 {
            return bad("k", "must be at least 1");
        }
        if let Antennas::PerUser(v) = &self.nt {
            if v.len() != self.k {
                return bad("nt", "needs one entry per user");
            }
        }
        if let Antennas::PerUser(v) = &self.nr {
            if v.len() != self.k {
                return bad("nr", "needs one entry per user");
            }
        }
        if self.nt.expand(self.k).contains(&0) {
            return bad("nt", "must be at least 1");
        }
        if self.nr.expand(self.k).contains(&0) {
            return bad("nr", "must be at least 1");
        }
        match &self.rho2 {
            Variance::Same(v) if !v.is_finite() || *v < 0.0 => return bad("rho2", "must be finite and non-negative"),
            Variance::Matrix(m) if m.len() != self.k || m.iter().any(|r| r.len() != self.k) => {
                return bad("rho2", "must be a k × k matrix")
            }
            Variance::Matrix(m) if m.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) => {
                return bad("rho2", "entries must be finite and non-negative")
            }
            _ => {}
        }
        if self.snr_grid_db.is_empty() {
            return bad("snr_grid_db", "must not be empty");
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_grid_db", "values must be finite");
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1");
        }
        if self.schemes.is_empty() {
            return bad("schemes", "must not be empty");
        }
        if !(self.target_rate.is_finite() && self.target_rate >= 0.0) {
            return bad("target_rate", "must be finite and non-negative");
        }
        if self.target_rate_grid.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("target_rate_grid", "values must be finite and non-negative");
        }
        if self.oracle.factor_bound < 1 {
            return bad("oracle.factor_bound", "must be at least 1");
        }
        if self.oracle.a_bound < 1 {
            return bad("oracle.a_bound", "must be at least 1");
        }
        if self.oracle.c_bound < 1 {
            return bad("oracle.c_bound", "must be at least 1");
        }
        self.search.validate()
    }
}

/// Results of one channel realization at one SNR point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub snr_db: f64,
    /// `rates[s][k]`: scheme `s` (in config order) at receiver `k`.
    pub rates: Vec<Vec<f64>>,
    /// Mean alternating-search iterations per stage at each receiver; empty when
    /// IFMR is not simulated.
    pub ifmr_iterations: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: usize,
    pub points: Vec<PointMetrics>,
    pub wall_time_s: f64,
}

fn scheme_rate(scheme: Scheme, ctx: &ReceiverContext, cfg: &SimConfig, iters: &mut Vec<f64>) -> Result<f64> {
    Ok(match scheme {
        Scheme::Ifmr => {
            let r = run_receiver(ctx, &cfg.search)?;
            iters.push(r.mean_iterations());
            r.sum_rate
        }
        Scheme::Iflr => iflr_rate(ctx, &cfg.search),
        Scheme::Mmse => mmse_rate(ctx),
        Scheme::Zf => zf_rate(ctx),
        Scheme::Oracle => brute_sequential(ctx, cfg.oracle)?.sum_rate,
    })
}

/// Runs every scheme at every SNR point on the channel of trial `trial`.
pub fn run_trial(cfg: &SimConfig, topo: &Topology, trial: usize) -> Result<TrialMetrics> {
    let start = Instant::now();
    let cs = ChannelSet::generate_trial(topo, cfg.seed, trial as u64)?;
    let mut points = Vec::with_capacity(cfg.snr_grid_db.len());
    for &snr_db in &cfg.snr_grid_db {
        let wrap = |e: Error| Error::Trial { trial, snr_db, source: Box::new(e) };
        let snr = 10f64.powf(snr_db / 10.0);
        let mut rates = vec![Vec::with_capacity(topo.k); cfg.schemes.len()];
        let mut ifmr_iterations = Vec::new();
        for k in 0..topo.k {
            let ctx = ReceiverContext::new(&cs, k, snr).map_err(wrap)?;
            for (s, &scheme) in cfg.schemes.iter().enumerate() {
                rates[s].push(scheme_rate(scheme, &ctx, cfg, &mut ifmr_iterations).map_err(wrap)?);
            }
        }
        points.push(PointMetrics { snr_db, rates, ifmr_iterations });
    }
    Ok(TrialMetrics { trial, points, wall_time_s: start.elapsed().as_secs_f64() })
}

/// All trials on the current thread.
pub fn run_sequential(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let topo = cfg.topology();
    let trials = (0..cfg.trials).map(|t| run_trial(cfg, &topo, t)).collect::<Result<Vec<_>>>()?;
    Ok(SimOutput { config: cfg.clone(), trials })
}

/// All trials on the current rayon pool. The first failing trial in index
/// order is reported.
#[cfg(feature = "parallel")]
pub fn run_parallel(cfg: &SimConfig) -> Result<SimOutput> {
    use rayon::prelude::*;
    cfg.validate()?;
    let topo = cfg.topology();
    let results: Vec<Result<TrialMetrics>> = (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, &topo, t)).collect();
    let trials = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SimOutput { config: cfg.clone(), trials })
}

/// Parallel when the `parallel` feature is enabled, sequential otherwise.
pub fn run(cfg: &SimConfig) -> Result<SimOutput> {
    #[cfg(feature = "parallel")]
    {
        run_parallel(cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_sequential(cfg)
    }
}

/// One aggregate line of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub snr_db: f64,
    pub scheme: Scheme,
    pub mean_rate: f64,
    pub stderr: f64,
    pub outage: f64,
    pub throughput: f64,
    /// Only for IFMR.
    pub mean_iters: Option<f64>,
    pub target_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub config: SimConfig,
    pub trials: Vec<TrialMetrics>,
}

impl SimOutput {
    fn scheme_index(&self, scheme: Scheme) -> Option<usize> {
        self.config.schemes.iter().position(|&s| s == scheme)
    }

    /// Receiver-averaged rate of each trial at SNR index `p`.
    pub fn trial_samples(&self, p: usize, scheme: Scheme) -> Option<Vec<f64>> {
        let s = self.scheme_index(scheme)?;
        Some(self.trials.iter().map(|t| mean(&t.points[p].rates[s])).collect())
    }

    /// Every per-receiver rate at SNR index `p`, trial-major.
    pub fn receiver_samples(&self, p: usize, scheme: Scheme) -> Option<Vec<f64>> {
        let s = self.scheme_index(scheme)?;
        Some(self.trials.iter().flat_map(|t| t.points[p].rates[s].iter().copied()).collect())
    }

    pub fn mean_iterations(&self, p: usize) -> Option<f64> {
        let per_trial: Vec<f64> = self.trials.iter().map(|t| mean(&t.points[p].ifmr_iterations)).collect();
        (self.scheme_index(Scheme::Ifmr).is_some() && !per_trial.is_empty()).then(|| mean(&per_trial))
    }

    /// Mean over trials of the receiver-averaged rate, one entry per SNR point.
    pub fn mean_curve(&self, scheme: Scheme) -> Option<Vec<f64>> {
        (0..self.config.snr_grid_db.len()).map(|p| self.trial_samples(p, scheme).map(|x| mean(&x))).collect()
    }

    pub fn row(&self, p: usize, scheme: Scheme, target_rate: f64) -> Option<Row> {
        let per_trial = self.trial_samples(p, scheme)?;
        let per_rx = self.receiver_samples(p, scheme)?;
        Some(Row {
            snr_db: self.config.snr_grid_db[p],
            scheme,
            mean_rate: mean(&per_trial),
            stderr: stderr(&per_trial),
            outage: outage(&per_rx, target_rate),
            throughput: throughput(&per_rx, target_rate),
            mean_iters: if scheme == Scheme::Ifmr { self.mean_iterations(p) } else { None },
            target_rate,
        })
    }

    /// One row per SNR point and scheme at the configured target rate.
    pub fn rows(&self) -> Vec<Row> {
        self.rows_at(&[self.config.target_rate])
    }

    /// One row per SNR point, scheme and target rate.
    pub fn rows_at(&self, target_rates: &[f64]) -> Vec<Row> {
        let mut out = Vec::new();
        for p in 0..self.config.snr_grid_db.len() {
            for &scheme in &self.config.schemes {
                for &rt in target_rates {
                    out.extend(self.row(p, scheme, rt));
                }
            }
        }
        out
    }

    /// SNR at which the mean curve of `scheme` first reaches `level`.
    pub fn crossing(&self, scheme: Scheme, level: f64) -> Option<f64> {
        crossing_snr(&self.config.snr_grid_db, &self.mean_curve(scheme)?, level)
    }
}

pub const CSV_HEADER: &str = "snr_db,scheme,mean_rate,stderr,outage,throughput,mean_iters,target_rate";

pub fn write_csv<W: Write>(rows: &[Row], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        let iters = r.mean_iters.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.snr_db,
            r.scheme.name(),
            r.mean_rate,
            r.stderr,
            r.outage,
            r.throughput,
            iters,
            r.target_rate
        )?;
    }
    Ok(())
}

/// Run manifest written next to the CSV.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config: &'a SimConfig,
    pub overrides: &'a [String],
    pub version: &'static str,
    pub threads: usize,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub crossings: Vec<(Scheme, Option<f64>)>,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Pairwise summation, so the result depends only on the sample order.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(x) / x.len() as f64
}

/// Standard error of the mean; 0 for a single sample.
pub fn stderr(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(x);
    let dev: Vec<f64> = x.iter().map(|v| (v - m) * (v - m)).collect();
    (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
}

/// Mean and standard error of the paired differences `x_i - y_i`.
pub fn paired_difference(x: &[f64], y: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    (mean(&d), stderr(&d))
}

/// Fraction of samples strictly below `target_rate`.
pub fn outage(rates: &[f64], target_rate: f64) -> f64 {
    rates.iter().filter(|&&r| r < target_rate).count() as f64 / rates.len() as f64
}

/// `R_t (1 - outage)`.
pub fn throughput(rates: &[f64], target_rate: f64) -> f64 {
    target_rate * (1.0 - outage(rates, target_rate))
}

/// First SNR at which `values` reaches `level`, linearly interpolated
/// between grid points. `None` if the curve stays below `level`.
pub fn crossing_snr(snr_db: &[f64], values: &[f64], level: f64) -> Option<f64> {
    let first = values.iter().position(|&v| v >= level)?;
    if first == 0 {
        return Some(snr_db[0]);
    }
    let (s0, s1) = (snr_db[first - 1], snr_db[first]);
    let (v0, v1) = (values[first - 1], values[first]);
    Some(s0 + (level - v0) / (v1 - v0) * (s1 - s0))
}

/// Log-log slope of outage between two SNR points, in decades per decade.
pub fn outage_slope(snr_db: (f64, f64), outage: (f64, f64)) -> f64 {
    (outage.1.log10() - outage.0.log10()) / ((snr_db.1 - snr_db.0) / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            k: 2,
            nt: Antennas::Same(1),
            nr: Antennas::Same(2),
            snr_grid_db: vec![0.0, 10.0],
            trials: 6,
            schemes: vec![Scheme::Ifmr, Scheme::Mmse, Scheme::Zf],
            ..SimConfig::default()
        }
    }

    #[test]
    fn outage_examples() {
        assert_eq!(outage(&[1.0, 2.0], 1.0), 0.0);
        assert_eq!(outage(&[0.0, 0.3], 0.0), 0.0);
        assert_eq!(outage(&[0.5, 1.5], 1.0), 0.5);
    }

    #[test]
    fn throughput_examples() {
        assert_eq!(throughput(&[3.0, 4.0], 2.5), 2.5);
        assert_eq!(throughput(&[1.0, 1.0, 1.0], 2.0), 0.0);
        assert_eq!(throughput(&[1.0, 5.0], 0.0), 0.0);
        assert_eq!(throughput(&[1.0, 5.0], 1e9), 0.0);
    }

    #[test]
    fn stats() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(stderr(&[4.0]), 0.0);
        assert!((stderr(&[1.0, 3.0]) - 1.0).abs() < 1e-15);
        let x: Vec<f64> = (0..1000).map(|i| i as f64 * 0.1).collect();
        assert!((pairwise_sum(&x) - 49950.0).abs() < 1e-9);
        assert_eq!(paired_difference(&[2.0, 4.0], &[1.0, 3.0]), (1.0, 0.0));
    }

    #[test]
    fn crossing_interpolates() {
        let s = [0.0, 5.0, 10.0];
        assert_eq!(crossing_snr(&s, &[0.2, 0.6, 1.4], 1.0), Some(7.5));
        assert_eq!(crossing_snr(&s, &[1.2, 1.6, 1.4], 1.0), Some(0.0));
        assert_eq!(crossing_snr(&s, &[0.2, 0.6, 0.9], 1.0), None);
    }

    #[test]
    fn slope_of_power_law() {
        let s = outage_slope((20.0, 30.0), (1e-2, 1e-4));
        assert!((s + 2.0).abs() < 1e-12);
    }

    #[test]
    fn config_defaults_and_errors() {
        let c: SimConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, SimConfig::default());
        assert!(c.validate().is_ok());
        assert!(serde_json::from_str::<SimConfig>(r#"{"bogus": 1}"#).is_err());
        let c: SimConfig = serde_json::from_str(r#"{"k": 2, "nt": [1, 2], "rho2": [[1, 0.5], [0.5, 1]]}"#).unwrap();
        assert_eq!(c.topology().nt, vec![1, 2]);
        assert_eq!(c.topology().rho2[0][1], 0.5);
        for (cfg, key) in [
            (SimConfig { trials: 0, ..SimConfig::default() }, "trials"),
            (SimConfig { snr_grid_db: vec![f64::NAN], ..SimConfig::default() }, "snr_grid_db"),
            (SimConfig { nt: Antennas::PerUser(vec![1]), ..SimConfig::default() }, "nt"),
            (SimConfig { rho2: Variance::Same(-1.0), ..SimConfig::default() }, "rho2"),
            (SimConfig { schemes: vec![], ..SimConfig::default() }, "schemes"),
        ] {
            let msg = cfg.validate().unwrap_err().to_string();
            assert!(msg.contains(key), "{msg}");
        }
    }

    #[test]
    fn sequential_run_is_reproducible() {
        let a = run_sequential(&small()).unwrap();
        let b = run_sequential(&small()).unwrap();
        assert_eq!(a.rows(), b.rows());
        assert_eq!(a.rows().len(), 6);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_matches_sequential() {
        let cfg = small();
        let seq = run_sequential(&cfg).unwrap();
        for threads in [1, 3] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let par = pool.install(|| run_parallel(&cfg)).unwrap();
            assert_eq!(seq.rows(), par.rows());
        }
    }

    #[test]
    fn mmse_dominates_zf_in_the_mean() {
        let out = run_sequential(&SimConfig { trials: 30, ..small() }).unwrap();
        let m = out.mean_curve(Scheme::Mmse).unwrap();
        let z = out.mean_curve(Scheme::Zf).unwrap();
        assert!(m.iter().zip(&z).all(|(a, b)| a >= b));
    }

    #[test]
    fn trial_failure_names_the_trial() {
        let cfg = SimConfig {
            k: 2,
            nt: Antennas::Same(3),
            nr: Antennas::Same(3),
            snr_grid_db: vec![30.0],
            trials: 2,
            schemes: vec![Scheme::Oracle],
            oracle: OracleBound { factor_bound: 40, a_bound: 40, c_bound: 40 },
            ..SimConfig::default()
        };
        match run_sequential(&cfg) {
            Err(Error::Trial { trial: 0, snr_db, .. }) => assert_eq!(snr_db, 30.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_layout() {
        let out = run_sequential(&SimConfig { trials: 2, ..small() }).unwrap();
        let mut buf = Vec::new();
        write_csv(&out.rows(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("0,ifmr,"));
        assert!(lines[2].starts_with("0,mmse,"));
        assert!(lines[2].split(',').nth(6).unwrap().is_empty());
        for l in &lines[1..] {
            assert_eq!(l.split(',').count(), 8);
        }
    }
}
