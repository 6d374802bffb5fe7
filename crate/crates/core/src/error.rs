use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate discretization: {0}")]
    Degenerate(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("missing table entries: {0}")]
    MissingEntries(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
