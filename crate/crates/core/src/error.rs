use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid embedding set: {0}")]
    InvalidSet(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input is not sorted ascending")]
    Unsorted,
    #[error("problem too large for brute force: n = {n} exceeds cap {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sinkhorn produced non-finite values at epsilon = {epsilon}")]
    NumericalOverflow { epsilon: f64 },
    #[error("embedding set has no labels")]
    MissingLabels,
    #[error("{path}:{line}: malformed file: {msg}")]
    MalformedFile {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{0}: file contains no data rows")]
    EmptyFile(PathBuf),
    #[error("tape already consumed by a previous backward pass")]
    StaleTape,
    #[error("non-finite loss at step {step}: {breakdown}")]
    NonFiniteLoss { step: usize, breakdown: String },
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("image dimensions too small for SSIM window: {0}")]
    TooSmall(String),
    #[error("dynamic range mismatch: {0} vs {1}")]
    RangeMismatch(f64, f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (files, flags, shapes),
    /// false for failures that happen during a computation.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::NumericalOverflow { .. }
        )
    }
}
