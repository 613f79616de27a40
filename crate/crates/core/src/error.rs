//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A distribution or model parameter is outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An input series or argument fails a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Paired series have different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// The score recursion produced a non-finite state.
    #[error("explosive filter state at observation {step}")]
    ExplosiveFilter { step: usize },

    /// Maximum-likelihood estimation could not start or produced no usable fit.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// Too many simulated forecast paths diverged.
    #[error("explosive simulation: {exploded} of {total} paths diverged")]
    ExplosiveSimulation { exploded: usize, total: usize },

    /// The rolling harness exceeded its refit failure budget.
    #[error("refit failure rate too high: {failures} of {refits} refits failed")]
    TooManyRefitFailures { failures: usize, refits: usize },
}
