use thiserror::Error;

/// Errors produced by the interval kriging library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid interval [{lower}, {upper}]: bounds must be finite with lower <= upper")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A logarithmic barrier was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("failed to converge: {0}")]
    NonConvergence(String),

    /// An ordinary kriging iterate left the feasible region.
    #[error("infeasible iterate: {0}")]
    Infeasible(String),

    #[error("degenerate design: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
