use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("symmetry violation: {0}")]
    Symmetry(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("unsupported gate: {0}")]
    UnsupportedGate(String),
    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by malformed or inconsistent user input, as opposed to
    /// failures of the numerics themselves.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Numeric(_))
    }
}
