//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the estimation pipeline and its inputs.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid points are not strictly increasing inside [0, 1], or too few.
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    /// Shapes of two inputs do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An operation was called on inputs violating its contract.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Truncation selection on an all-zero spectrum.
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    /// A requested component's eigenvalue is numerically zero.
    #[error("ill-conditioned component: {0}")]
    IllConditioned(String),

    /// Evaluation point outside the basis domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Basis size too small for the requested degree.
    #[error("too few knots: {0}")]
    TooFewKnots(String),

    /// Non-finite values encountered during iteration.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
