use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the library. The CLI maps each variant onto an exit
/// code through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated payload while reading {context}")]
    Truncated { context: &'static str },

    #[error("record {index}: label {label} out of range for {class_count} classes")]
    LabelOutOfRange {
        index: usize,
        label: u32,
        class_count: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("class {label} has {count} records; at least 2 are required")]
    ClassTooSmall { label: u32, count: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal is not power-normalized (mean power {power})")]
    NotNormalized { power: f64 },

    #[error("non-finite loss at training step {step}")]
    NonFiniteLoss { step: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 for usage errors, 2 for data errors, 3 for
    /// numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 1,
            Error::NonFiniteLoss { .. } => 3,
            _ => 2,
        }
    }
}
