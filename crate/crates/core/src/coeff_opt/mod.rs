//! The three coefficient-selection steps run inside every iteration of the alternating search.
//!
//! * Step I picks the factor pairs `(d_l, e_l)` by reducing the 2-D lattice
//!   with Gram matrix `U` ([`gram`]).
//! * Step II picks the UCM vector `c` from an SDP relaxation of a min-max
//!   integer quadratic program, followed by rounding with local repair
//!   ([`ucm`], [`sdp`]).
//! * Step III picks the DCM vector `a` by walking slowest-descent lines through
//!   the continuous min-max minimizer ([`dcm`]).

pub mod dcm;
pub mod gram;
pub mod sdp;
pub mod ucm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dcm::{dcm_center, lemma2_radius, step3_dcm, CenterCase, DcmCenter};
pub use gram::{build_u, gauss_reduce, select_factors, step1_factors, GramU};
pub use sdp::{solve_ucm_sdp, SdpSolution};
pub use ucm::{build_ucm_problem, round_ucm, rounding_candidates, UcmProblem};

/// Knobs of the coefficient search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Number of slowest-descent lines W; `None` means all `Nt[k]` eigendirections.
    pub lines: Option<usize>,
    /// Cap on the quantization radius R.
    pub r_max: usize,
    /// Bound on |d|, |e| for exhaustive fallbacks.
    pub factor_bound: i64,
    /// Duality-gap tolerance of the SDP relaxation.
    pub sdp_tol: f64,
    /// Newton-step budget of the SDP solver.
    pub sdp_max_iters: usize,
    /// Convergence threshold δ on the stage rate.
    pub delta: f64,
    /// Iteration cap of the alternating search.
    pub max_iters: usize,
    /// Run each stage from several starting points and keep the best.
    pub multi_start: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            lines: None,
            r_max: 8,
            factor_bound: 4,
            sdp_tol: 1e-6,
            sdp_max_iters: 5000,
            delta: 1e-3,
            max_iters: 50,
            multi_start: true,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("search.{what} must be positive")));
        if self.lines == Some(0) {
            return bad("lines");
        }
        if self.r_max == 0 {
            return bad("r_max");
        }
        if self.factor_bound < 1 {
            return bad("factor_bound");
        }
        if !(self.sdp_tol > 0.0) {
            return bad("sdp_tol");
        }
        if self.sdp_max_iters == 0 {
            return bad("sdp_max_iters");
        }
        if !(self.delta > 0.0) {
            return bad("delta");
        }
        if self.max_iters == 0 {
            return bad("max_iters");
        }
        Ok(())
    }
}
