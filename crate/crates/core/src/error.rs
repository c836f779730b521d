use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or out-of-range parameters.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input data violates a structural invariant (orthonormality, hermiticity, ...).
    #[error("validation error: {0}")]
    Validation(String),
    /// Requested computation exceeds what this representation supports.
    #[error("capability error: {0}")]
    Capability(String),
    /// A propagator left its conservation envelope.
    #[error("instability: {0}")]
    Instability(String),
    /// Two objects that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
