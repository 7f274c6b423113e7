//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced while loading data, building scores, or running estimators.
///
/// The variants split into two families that callers (notably the CLI) treat
/// differently: schema/validation problems with the inputs, and
/// positivity/degeneracy problems discovered during computation.
#[derive(Debug, Error)]
pub enum Error {
    /// Input does not match the expected schema or argument contract.
    #[error("{0}")]
    Schema(String),

    /// Schema violation localized to a column and 1-based data row.
    #[error("column `{column}`, row {row}: {message}")]
    SchemaAt {
        column: String,
        row: usize,
        message: String,
    },

    /// Overlap or censoring positivity violated; the computation is refused
    /// rather than silently truncated.
    #[error("{0}")]
    Positivity(String),

    /// The requested computation is degenerate for this input
    /// (for example rescaling zero-variance weights).
    #[error("{0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::SchemaAt { .. } | Error::Io(_) | Error::Csv(_) => 2,
            Error::Positivity(_) | Error::Degenerate(_) => 3,
        }
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub(crate) fn schema_at(
        column: impl Into<String>,
        row: usize,
        msg: impl Into<String>,
    ) -> Self {
        Error::SchemaAt {
            column: column.into(),
            row,
            message: msg.into(),
        }
    }
}
