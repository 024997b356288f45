//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by tensor ops, model I/O, dataset loading, and training.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{context}: shape mismatch, expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("{context}: non-finite value encountered")]
    NonFinite { context: String },

    #[error("label {label} out of range for {classes} classes (record {index})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("loss became NaN at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("bad magic bytes: expected {expected:?}, got {actual:?}")]
    BadMagic { expected: [u8; 4], actual: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated or corrupt data while reading {0}")]
    Truncated(String),

    #[error("{path}:{line}: {message}")]
    ManifestParse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("unmapped external classes: {0:?}")]
    UnmappedClasses(Vec<String>),

    #[error("model expects {model_classes} classes but dataset has {dataset_classes}")]
    ClassCountMismatch {
        model_classes: usize,
        dataset_classes: usize,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: &[usize],
        actual: &[usize],
    ) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
