use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index ({worker}, {item}) outside a {num_workers}x{num_items} label matrix")]
    IndexOutOfRange {
        worker: usize,
        item: usize,
        num_workers: usize,
        num_items: usize,
    },

    #[error("duplicate label for worker {worker}, item {item}")]
    DuplicateEntry { worker: usize, item: usize },

    #[error("probability {value} for {what} is outside {range}")]
    InvalidProbability {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("dimension mismatch: {what} has length {actual}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("gold label set is empty")]
    EmptyGold,

    #[error("weight vector has zero norm")]
    ZeroNormWeights,

    #[error("bound not applicable: {0}")]
    BoundNotApplicable(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("exact enumeration supports at most {max} workers, got {actual}")]
    TooManyWorkers { max: usize, actual: usize },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
