use thiserror::Error;

/// Errors produced by the certification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size limit exceeded: {what} needs {requested} coordinates, cap is {cap}")]
    SizeLimit {
        what: &'static str,
        requested: u128,
        cap: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("certificate was issued for system {expected}, got system {actual}")]
    WrongSystem { expected: String, actual: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sample grids differ: {0}")]
    GridMismatch(String),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
