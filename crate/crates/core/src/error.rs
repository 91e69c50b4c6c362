use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("enumeration limit of {limit} feasible actions exceeded")]
    EnumerationLimit { limit: usize },

    #[error("invalid history: {0}")]
    InvalidHistory(String),

    #[error("outcome not representable: {0}")]
    BadOutcome(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
