use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed audio file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("unsupported audio format in {path}: {msg}")]
    UnsupportedFormat { path: PathBuf, msg: String },

    #[error("signal too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("AUC undefined: need at least one positive and one negative (got {positives} positive, {negatives} negative)")]
    SingleClass { positives: usize, negatives: usize },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("checkpoint parse error: {0}")]
    CheckpointParse(String),

    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
