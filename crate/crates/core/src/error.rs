use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("coefficient factors ({d1},{e1}),({d2},{e2}) are linearly dependent")]
    DegenerateFactors { d1: i64, e1: i64, d2: i64, e2: i64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("theorem violated: {0}")]
    TheoremViolation(String),

    #[error("SDP solver stalled after {iterations} Newton steps (gap bound {gap:e})")]
    SolverStall { iterations: usize, gap: f64 },

    #[error("continuous DCM center is singular (min eigenvalue {min_eig:e})")]
    SingularCenter { min_eig: f64 },

    #[error("no admissible integer candidate on the descent lines")]
    NoCandidate,

    #[error("initial DCM vector is zero or dependent on earlier stages")]
    InitDegenerate,

    #[error("search space of {points} points exceeds the limit of {limit}")]
    SearchSpaceTooLarge { points: f64, limit: f64 },

    #[error("trial {trial} at {snr_db} dB failed: {source}")]
    Trial {
        trial: usize,
        snr_db: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
