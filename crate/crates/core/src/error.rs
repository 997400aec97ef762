use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Operands disagree in shape, jet order or jet dimension.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// An argument lies outside the domain of the operation (division by zero, empty norm, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// A non-finite value appeared during a computation.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A size guard was exceeded.
    #[error("size limit exceeded: {0}")]
    Size(String),
    /// An iterative method hit its iteration cap.
    #[error("no convergence: {0}")]
    NonConvergence(String),
    /// A caller broke an API contract (e.g. a dangling tape node id).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
