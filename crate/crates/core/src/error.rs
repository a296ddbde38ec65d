use std::path::PathBuf;

use crate::dataset::Group;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("column `{0}` referenced by the schema is missing from the CSV header")]
    MissingColumn(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("label column `{column}` has {distinct} distinct values; expected at most 2")]
    NonBinaryLabel { column: String, distinct: usize },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid value `{value}` in column `{column}` (row {row})")]
    InvalidValue {
        column: String,
        row: usize,
        value: String,
    },

    #[error("invalid configuration: {field}: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("the {0:?} group has no instances with y = 1")]
    EmptyEooPool(Group),

    #[error("matching is empty")]
    EmptyMatching,

    #[error("shape mismatch: expected {expected} feature columns, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("no candidate satisfies the accuracy tolerance")]
    NoFeasibleCandidate,

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("{0}")]
    Csv(String),

    #[error("{0}")]
    Json(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Csv(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Json(err.to_string())
    }
}
