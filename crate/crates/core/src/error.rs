use thiserror::Error;

use crate::model::ObjectId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty patch")]
    EmptyPatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("window not full: have {have} samples, need {need}")]
    WindowNotFull { have: usize, need: usize },
    #[error("unnormalized signature (total mass {0})")]
    UnnormalizedSignature(f64),
    #[error("histogram bin edges differ")]
    EdgeMismatch,
    #[error("non-monotonic timestamp: {got} after {prev}")]
    NonMonotonicTimestamp { prev: f64, got: f64 },
    #[error("missing patch for object {0}")]
    MissingPatch(ObjectId),
    #[error("object {0} not in frame")]
    UnknownObject(ObjectId),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("malformed image: {0}")]
    Image(String),
    #[error("malformed session log (line {line}): {reason}")]
    Log { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
