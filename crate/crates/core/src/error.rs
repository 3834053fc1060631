use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("distribution error in {file}: pixel (row {row}, col {col}) has {detail}")]
    Distribution {
        file: String,
        row: usize,
        col: usize,
        detail: String,
    },

    #[error("label {value} at (row {row}, col {col}) is outside [0, {num_classes}) and is not the ignore index")]
    LabelRange {
        value: u32,
        row: usize,
        col: usize,
        num_classes: usize,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input files: {}", .0.join(", "))]
    MissingFiles(Vec<String>),

    #[error("ensemble metric needs at least {required} predictions, got {actual}")]
    EnsembleSize { required: usize, actual: usize },

    #[error("image has no valid pixels")]
    EmptyImage,

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("AUROC undefined: {positives} misclassified and {negatives} correct pixels")]
    UndefinedAuroc { positives: u64, negatives: u64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid value for {flag}: {message}")]
    Usage { flag: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: &std::path::Path, err: image::ImageError) -> Self {
        match err {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format {
                path: path.display().to_string(),
                reason: other.to_string(),
            },
        }
    }

    pub(crate) fn usage(flag: &str, message: impl Into<String>) -> Self {
        Error::Usage {
            flag: flag.to_string(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end: 2 for usage
    /// errors, 3 for everything caused by the data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage { .. } => 2,
            _ => 3,
        }
    }
}
