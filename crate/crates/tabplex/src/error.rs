use thiserror::Error;

/// Crate-wide error type. Variants are grouped by pipeline stage so the CLI
/// can map them onto exit codes (validation vs. runtime failures).
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad inputs or missing artifacts rather than
    /// failures occurring mid-computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Schema(_) | Error::Validation(_) | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
