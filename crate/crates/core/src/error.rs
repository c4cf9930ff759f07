use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside the domain of the requested function or family.
    #[error("domain error: {0}")]
    Domain(String),

    /// Result exceeds the range of `f64`; use the log-space variant instead.
    #[error("overflow: {0}")]
    Overflow(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Parameter outside the range for which a mixture representation holds.
    #[error("validity range violated: {0}")]
    Validity(String),

    #[error("matrix is not orthogonal (max deviation {0:e})")]
    NonOrthogonal(f64),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Root search found no sign change in its bracket.
    #[error("no root bracket: {0}")]
    NoBracket(String),

    #[error("insufficient expected counts: {0}")]
    InsufficientCounts(String),

    /// Likelihood ratio of a mixing family failed to be monotone.
    #[error("monotone likelihood ratio violated at index {0}")]
    MlrViolation(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
