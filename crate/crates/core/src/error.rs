use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("symbol index {index} out of range for {modulation} (order {order})")]
    InvalidSymbol {
        modulation: &'static str,
        index: usize,
        order: usize,
    },
    #[error("frame underrun: need {needed} samples, have {available}")]
    FrameUnderrun { needed: usize, available: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("dataset corrupt: {0}")]
    DatasetCorrupt(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("label {0} outside [0, 12)")]
    InvalidLabel(usize),
    #[error("node count must be at least 1, got {0}")]
    InvalidNodeCount(usize),
    #[error("network has no designated feature layer")]
    NoFeatureLayer,
    #[error("model corrupt: {0}")]
    ModelCorrupt(String),
    #[error("cannot vote over zero decisions")]
    EmptyVote,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("model missing: {0}")]
    ModelMissing(String),
    #[error("prerequisite missing: {0}")]
    PrerequisiteMissing(String),
    #[error("SNR gain undefined: {0}")]
    GainUndefined(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
