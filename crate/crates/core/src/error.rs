use thiserror::Error;

/// Errors produced by the calibration library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("rotation angle {0:.9} rad is too close to pi for a unique logarithm")]
    DegenerateRotation(f64),
    #[error("no valid points to sample")]
    EmptyBatch,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("optimization diverged: {0}")]
    Diverged(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("degenerate scene: {0}")]
    DegenerateScene(String),
    #[error("only {0} class-agreeing correspondences, need at least 6")]
    InsufficientCorrespondences(usize),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
