use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("shape mismatch between `{from}` and `{to}`: {detail}")]
    ShapeMismatch {
        from: String,
        to: String,
        detail: String,
    },

    #[error("invalid layer `{layer}`: {detail}")]
    InvalidLayer { layer: String, detail: String },

    #[error("missing weights for layer `{layer}` (tensor `{tensor}`)")]
    MissingWeights { layer: String, tensor: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("unsupported for training: layer `{layer}` of kind {kind}")]
    UnsupportedForTraining { layer: String, kind: String },

    #[error("weights file: {0}")]
    WeightsFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
