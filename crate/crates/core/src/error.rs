use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Inputs whose shapes do not fit together (chart count, degree, dimensions).
    #[error("structural error: {0}")]
    Structural(String),
    /// A point or parameter outside the region where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Quadrature or iteration failed to reach its tolerance.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Caller-side contract not met (non-invariant input, unvalidated scenario).
    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
