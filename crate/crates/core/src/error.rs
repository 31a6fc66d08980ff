//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed manifest row; names the row number and offending column.
    #[error("manifest row {row}, column `{column}`: {message}")]
    Manifest {
        row: usize,
        column: String,
        message: String,
    },

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error("eye `{eye_id}` maps to both patient `{first}` and patient `{second}`")]
    EyePatientConflict {
        eye_id: String,
        first: String,
        second: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unknown clinical key `{0}`")]
    UnknownKey(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code class for the CLI: 2 = data error, 3 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            Error::InvalidArgument(_) => 1,
            _ => 2,
        }
    }
}
