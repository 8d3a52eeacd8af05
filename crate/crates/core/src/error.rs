use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid step size {lambda}: must lie in (0, {upper})")]
    InvalidStep { lambda: f64, upper: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("empty support")]
    EmptySupport,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("sampler failure: {0}")]
    Sampler(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("not detected: {0}")]
    NotDetected(String),
}

pub type Result<T> = std::result::Result<T, Error>;
