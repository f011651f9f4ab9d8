use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("dimension is zero (H={height}, W={width}, C={channels})")]
    ZeroDimension {
        height: usize,
        width: usize,
        channels: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("cannot normalize a zero vector (image {image_id:?}, row {row}, col {col})")]
    ZeroVector {
        image_id: String,
        row: usize,
        col: usize,
    },

    #[error("unknown class id {0}")]
    UnknownClass(u32),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("manifest error at line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("malformed activation map: {0}")]
    MalformedMap(String),

    #[error("malformed index file: {0}")]
    MalformedIndex(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
