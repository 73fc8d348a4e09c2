use std::io;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty reduction")]
    EmptyReduction,

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("label index {index} out of range for {num_labels} labels")]
    InvalidLabel { index: usize, num_labels: usize },

    #[error("enumeration too large: {paths} paths exceeds cap {cap}")]
    TooLarge { paths: f64, cap: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty training data")]
    EmptyTrainingData,

    #[error("training diverged")]
    Diverged,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed tag {0:?}")]
    MalformedTag(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("sequence {index}: gold and predicted lengths differ ({gold} vs {pred})")]
    LengthMismatch {
        index: usize,
        gold: usize,
        pred: usize,
    },

    #[error("unknown family {0:?}")]
    UnknownFamily(String),

    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("missing field: {0}")]
    MissingField(String),

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
