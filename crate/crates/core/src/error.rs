use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("{op}: non-finite value encountered{}", context.as_ref().map(|c| format!(" ({c})")).unwrap_or_default())]
    NonFinite {
        op: &'static str,
        context: Option<String>,
    },

    #[error("layer {index} ({kind}): {detail}")]
    Layer {
        index: usize,
        kind: String,
        detail: String,
    },

    #[error("unknown channel(s): {}", .0.join(", "))]
    UnknownChannel(Vec<String>),

    #[error("epoch window for event {event} (sample {sample}) exceeds recording bounds")]
    EpochOutOfBounds { event: usize, sample: usize },

    #[error(transparent)]
    Eegf(#[from] EegfError),

    #[error("config {path}: {detail}")]
    Config { path: String, detail: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Failure kinds when decoding an EEGF epoch file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum EegfError {
    #[error("bad magic {0:?}, expected \"EEGF\"")]
    BadMagic([u8; 4]),
    #[error("unsupported EEGF version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated EEGF payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing bytes after EEGF payload: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: usize, found: usize },
    #[error("label {label} at epoch {epoch} is out of range")]
    BadLabel { epoch: usize, label: u8 },
    #[error("channel name {0:?} is not 8-byte ASCII")]
    BadChannelName(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
