use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up. `detail` names the offending axes.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    /// The caller broke a documented precondition.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    /// Malformed file contents. `at` is a byte offset or a row label.
    #[error("format error at {at}: {detail}")]
    Format { at: String, detail: String },

    /// Training produced a non-finite loss.
    #[error("numeric abort: {0}")]
    NumericAbort(String),

    #[error("cannot open {}: {source}", path.display())]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn format_at_offset(offset: usize, detail: impl Into<String>) -> Self {
        Error::Format {
            at: format!("byte {offset}"),
            detail: detail.into(),
        }
    }

    pub(crate) fn format_at_row(row: usize, detail: impl Into<String>) -> Self {
        Error::Format {
            at: format!("row {row}"),
            detail: detail.into(),
        }
    }
}
