use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corpus is empty after filtering")]
    EmptyCorpus,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },

    #[error("sequence has {0} tokens; at least 2 are required")]
    SequenceTooShort(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("fill {fill:?} is incompatible with the canary template: {reason}")]
    IncompatibleFill { fill: String, reason: String },

    #[error("candidate space of size {size} exceeds the enumeration cap {cap}")]
    EnumerationCap { size: u128, cap: usize },

    #[error("privacy parameter out of range: {0}")]
    PrivacyParameter(String),

    #[error(
        "delta = {delta} violates the detector constraint 1 - gamma < delta < 1 (gamma = {gamma})"
    )]
    DeltaBelowDetectorFloor { delta: f64, gamma: f64 },

    #[error("empty batch")]
    EmptyBatch,

    #[error("dataset is degenerate: {0}")]
    DegenerateDataset(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("regex error: {0}")]
    Regex(#[from] regex::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
