use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at step {step} of {stage}")]
    NonFinite { stage: &'static str, step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("offset M = {offset} is out of range for a sequence of length {len}")]
    OffsetOutOfRange { offset: usize, len: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Errors raised while decoding one of the binary containers
/// (token files, checkpoints, anomaly maps).
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("unexpected end of token payload")]
    TruncatedTokens,

    #[error("unexpected end of {0}")]
    Truncated(&'static str),

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("hierarchy count mismatch: expected {expected}, found {found}")]
    HierarchyCountMismatch { expected: usize, found: usize },

    #[error("hierarchy {hierarchy}: {detail}")]
    GridShapeMismatch { hierarchy: usize, detail: String },

    #[error("declared size overflows: {0}")]
    Oversized(&'static str),

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
}
