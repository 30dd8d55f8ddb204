use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("sample {id}: failed to decode image {path}: {message}")]
    Decode {
        id: String,
        path: PathBuf,
        message: String,
    },

    #[error("sample {id}: failed to write image {path}: {message}")]
    Encode {
        id: String,
        path: PathBuf,
        message: String,
    },

    #[error("missing environmental attributes for samples: {}", .0.join(", "))]
    MissingEnv(Vec<String>),

    #[error("class {0:?} has no samples in the split; its weight is undefined")]
    EmptyClass(String),

    #[error("unknown sample id {0:?}")]
    UnknownSample(String),

    #[error("duplicate prediction for sample id {0:?}")]
    DuplicatePrediction(String),

    #[error("constant series: {0}")]
    ConstantSeries(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("JSON error in {path}: {message}")]
    Json { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
