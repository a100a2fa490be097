use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Validation,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed image header: {0}")]
    MalformedHeader(String),

    #[error("truncated image payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("unsupported maxval {0} (only 255 is accepted)")]
    UnsupportedMaxval(u32),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid ROIM document: {0}")]
    Roim(String),

    #[error("invalid box document: {0}")]
    Boxes(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("tensor file error: {0}")]
    TensorFile(String),

    #[error("feature extraction error: {0}")]
    Features(String),

    #[error("bitstream error: {0}")]
    Bitstream(String),

    #[error("rate control error: {0}")]
    RateControl(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metric error: {0}")]
    Metric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }
}
