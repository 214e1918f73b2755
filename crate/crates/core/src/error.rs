use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    /// The model has no encoder for this feature, typically because it was
    /// never part of the data the model was trained on.
    #[error("no encoder for feature `{0}`")]
    MissingEncoder(String),

    #[error("no decoder for target `{0}`")]
    MissingDecoder(String),

    #[error("invalid value for feature `{feature}`: {message}")]
    InvalidValue { feature: String, message: String },

    /// A data cell failed validation. `row` is 1-based over data rows
    /// (the header is not counted).
    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("schema fingerprint mismatch: model has {found}, expected {expected}")]
    Fingerprint { found: String, expected: String },

    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
