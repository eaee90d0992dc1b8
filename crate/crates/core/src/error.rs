use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("failed to encode {path}: {reason}")]
    Encode { path: PathBuf, reason: String },

    #[error("field of view is empty: no pixel above the luminance threshold")]
    EmptyFov,

    #[error("input contains a single class; both labels are required")]
    SingleClass,

    #[error("differences have zero variance; the t statistic is undefined")]
    ZeroVariance,

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("fingerprint mismatch: model was built for {expected:016x}, configuration is {actual:016x}")]
    FingerprintMismatch { expected: u64, actual: u64 },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("split counts {requested} do not match the {available} available entries")]
    SplitCountMismatch { requested: usize, available: usize },

    #[error("no common entries: {0}")]
    EmptyIntersection(String),

    #[error("csv error: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
