use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (pivot {pivot} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("undefined imbalance: arm {0} has no patients")]
    EmptyArm(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("rerandomization found no acceptable assignment in {0} draws")]
    AcceptanceFailure(usize),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("replication study failed: {0}")]
    Replications(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
