//! Random channel realizations and per-receiver views of them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_singular_value, Cholesky, Mat};

/// Dimensions and per-link variances of a K-pair interference channel.
///
/// `rho2[k][j]` is the entry variance of the link from transmitter `k` to
/// receiver `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub k: usize,
    pub nt: Vec<usize>,
    pub nr: Vec<usize>,
    pub rho2: Vec<Vec<f64>>,
}

impl Topology {
    /// Every node with `n_tx` / `n_rx` antennas and unit-variance links.
    pub fn symmetric(k: usize, n_tx: usize, n_rx: usize) -> Self {
        Topology { k, nt: vec![n_tx; k], nr: vec![n_rx; k], rho2: vec![vec![1.0; k]; k] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.nt.len() != self.k || self.nr.len() != self.k {
            return Err(Error::InvalidConfig(format!(
                "nt and nr must have k = {} entries (got {} and {})",
                self.k,
                self.nt.len(),
                self.nr.len()
            )));
        }
        if self.nt.iter().chain(&self.nr).any(|&n| n == 0) {
            return Err(Error::InvalidConfig("antenna counts must be at least 1".into()));
        }
        if self.rho2.len() != self.k || self.rho2.iter().any(|r| r.len() != self.k) {
            return Err(Error::InvalidConfig(format!("rho2 must be a {0}x{0} matrix", self.k)));
        }
        if self.rho2.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig("rho2 entries must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Total number of transmitted streams.
    pub fn total_streams(&self) -> usize {
        self.nt.iter().sum()
    }
}

/// One realization of all K² channel matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub topology: Topology,
    /// `h[k][j]` is the `nr[j] × nt[k]` matrix from transmitter `k` to receiver `j`.
    pub h: Vec<Vec<Mat>>,
    pub seed: u64,
}

impl ChannelSet {
    /// Draws every entry iid `N(0, rho2[k][j])` from a generator seeded by `seed`.
    pub fn generate(topology: &Topology, seed: u64) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Self::generate_with(topology, seed, &mut rng)
    }

    /// Realization for Monte Carlo trial `trial`: an independent ChaCha stream
    /// per trial index, so results do not depend on scheduling.
    pub fn generate_trial(topology: &Topology, seed: u64, trial: u64) -> Result<Self> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        Self::generate_with(topology, seed, &mut rng)
    }

    pub fn generate_with<R: Rng + ?Sized>(topology: &Topology, seed: u64, rng: &mut R) -> Result<Self> {
        topology.validate()?;
        let k = topology.k;
        let mut h = Vec::with_capacity(k);
        for tx in 0..k {
            let mut row = Vec::with_capacity(k);
            for rx in 0..k {
                let sd = topology.rho2[tx][rx].sqrt();
                let m = Mat::from_fn(topology.nr[rx], topology.nt[tx], |_, _| {
                    let z: f64 = rng.sample(StandardNormal);
                    sd * z
                });
                row.push(m);
            }
            h.push(row);
        }
        Ok(ChannelSet { topology: topology.clone(), h, seed })
    }

    /// Builds a channel set from explicit matrices, checking shapes.
    pub fn from_matrices(topology: &Topology, h: Vec<Vec<Mat>>) -> Result<Self> {
        topology.validate()?;
        if h.len() != topology.k || h.iter().any(|r| r.len() != topology.k) {
            return Err(Error::DimensionMismatch("channel grid must be k x k".into()));
        }
        for (tx, row) in h.iter().enumerate() {
            for (rx, m) in row.iter().enumerate() {
                if m.rows() != topology.nr[rx] || m.cols() != topology.nt[tx] {
                    return Err(Error::DimensionMismatch(format!(
                        "H[{tx}][{rx}] is {}x{}, expected {}x{}",
                        m.rows(),
                        m.cols(),
                        topology.nr[rx],
                        topology.nt[tx]
                    )));
                }
            }
        }
        Ok(ChannelSet { topology: topology.clone(), h, seed: 0 })
    }

    pub fn k(&self) -> usize {
        self.topology.k
    }
}

/// Everything receiver `k` needs at a given SNR.
///
/// The kernel `T = (I/SNR + Ĥ Ĥᵀ)⁻¹` is factored once; the blocks of
/// `M = I − Ĥᵀ T Ĥ` that the coefficient search touches are cached too.
#[derive(Clone, Debug)]
pub struct ReceiverContext {
    pub k: usize,
    pub snr: f64,
    /// `[H_1k, …, H_Kk]`, shape `nr[k] × L`.
    pub hhat: Mat,
    /// Direct link `H_kk`.
    pub hkk: Mat,
    /// Interference-only concatenation (Ĥ without block k), shape `nr[k] × Lc`.
    pub hk: Mat,
    pub nt: usize,
    pub l: usize,
    pub lc: usize,
    /// Column offset of block k inside Ĥ.
    pub offset: usize,
    kernel: Cholesky,
    /// `I − Ĥᵀ T Ĥ` in Ĥ column order (L × L).
    m_full: Mat,
    /// `I − H_kkᵀ T H_kk`.
    m_aa: Mat,
    /// `I − H_kᵀ T H_k`.
    m_cc: Mat,
    /// `−H_kkᵀ T H_k`.
    m_ac: Mat,
    lambda_max_sq: f64,
}

impl ReceiverContext {
    pub fn new(cs: &ChannelSet, k: usize, snr: f64) -> Result<Self> {
        let topo = &cs.topology;
        if k >= topo.k {
            return Err(Error::InvalidConfig(format!("receiver index {k} out of range (k = {})", topo.k)));
        }
        if !(snr > 0.0) || !snr.is_finite() {
            return Err(Error::InvalidConfig(format!("snr must be positive and finite, got {snr}")));
        }
        let nr = topo.nr[k];
        let blocks: Vec<&Mat> = (0..topo.k).map(|j| &cs.h[j][k]).collect();
        let hhat = Mat::hcat(&blocks, nr);
        let hkk = cs.h[k][k].clone();
        let others: Vec<&Mat> = (0..topo.k).filter(|&j| j != k).map(|j| &cs.h[j][k]).collect();
        let hk = Mat::hcat(&others, nr);
        let offset = topo.nt[..k].iter().sum();
        Self::assemble(k, snr, hhat, hkk, hk, offset)
    }

    /// Builds a context directly from `Ĥ` and the position of the desired block.
    pub fn from_hhat(hhat: Mat, offset: usize, nt: usize, snr: f64) -> Result<Self> {
        if offset + nt > hhat.cols() || nt == 0 {
            return Err(Error::DimensionMismatch("desired block outside Ĥ".into()));
        }
        if !(snr > 0.0) || !snr.is_finite() {
            return Err(Error::InvalidConfig(format!("snr must be positive and finite, got {snr}")));
        }
        let rows: Vec<usize> = (0..hhat.rows()).collect();
        let own: Vec<usize> = (offset..offset + nt).collect();
        let rest: Vec<usize> = (0..hhat.cols()).filter(|j| !own.contains(j)).collect();
        let hkk = hhat.select(&rows, &own);
        let hk = hhat.select(&rows, &rest);
        Self::assemble(0, snr, hhat, hkk, hk, offset)
    }

    fn assemble(k: usize, snr: f64, hhat: Mat, hkk: Mat, hk: Mat, offset: usize) -> Result<Self> {
        let nr = hhat.rows();
        let kernel_mat = hhat.matmul(&hhat.transpose()).add_diag(1.0 / snr);
        // SPD for every Ĥ because 1/SNR > 0
        let kernel = Cholesky::new(&kernel_mat)?;
        let l = hhat.cols();
        let nt = hkk.cols();
        let lc = l - nt;
        let m_full = Mat::identity(l).sub(&kernel.congruence(&hhat));
        let own: Vec<usize> = (offset..offset + nt).collect();
        let rest: Vec<usize> = (0..l).filter(|j| !own.contains(j)).collect();
        let m_aa = m_full.select(&own, &own);
        let m_cc = m_full.select(&rest, &rest);
        let m_ac = m_full.select(&own, &rest);
        let lambda_max = max_singular_value(&hhat);
        debug_assert_eq!(nr, hkk.rows());
        Ok(ReceiverContext {
            k,
            snr,
            hhat,
            hkk,
            hk,
            nt,
            l,
            lc,
            offset,
            kernel,
            m_full,
            m_aa,
            m_cc,
            m_ac,
            lambda_max_sq: lambda_max * lambda_max,
        })
    }

    pub fn nr(&self) -> usize {
        self.hhat.rows()
    }

    /// Cholesky factor of `I/SNR + Ĥ Ĥᵀ`.
    pub fn kernel(&self) -> &Cholesky {
        &self.kernel
    }

    /// `I − Ĥᵀ (I/SNR + Ĥ Ĥᵀ)⁻¹ Ĥ`, the equation-rate matrix.
    pub fn rate_matrix(&self) -> &Mat {
        &self.m_full
    }

    /// Desired-stream block `I − H_kkᵀ T H_kk`; the Hessian of every `f_l` in `a` up to `d_l²`.
    pub fn m_desired(&self) -> &Mat {
        &self.m_aa
    }

    /// Interference block `I − H_kᵀ T H_k`.
    pub fn m_interference(&self) -> &Mat {
        &self.m_cc
    }

    /// Cross block `−H_kkᵀ T H_k`.
    pub fn m_cross(&self) -> &Mat {
        &self.m_ac
    }

    /// `λ_max(Ĥ)²`.
    pub fn lambda_max_sq(&self) -> f64 {
        self.lambda_max_sq
    }

    /// Lays out `[d·a ; e·c]` in Ĥ column order: `d·a` in block k, `e·c` elsewhere.
    pub fn stacked_ecv(&self, d: i64, a: &[i64], e: i64, c: &[i64]) -> Vec<i64> {
        assert_eq!(a.len(), self.nt, "stacked_ecv: a has wrong length");
        assert_eq!(c.len(), self.lc, "stacked_ecv: c has wrong length");
        let mut out = Vec::with_capacity(self.l);
        out.extend(c[..self.offset].iter().map(|&x| e * x));
        out.extend(a.iter().map(|&x| d * x));
        out.extend(c[self.offset..].iter().map(|&x| e * x));
        out
    }
}
