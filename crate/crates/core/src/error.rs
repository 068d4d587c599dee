use thiserror::Error;

/// Errors produced by the estimator, diagnostics and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied data or parameters that violate a precondition.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    /// A factorization or solve did not produce a usable result.
    #[error("numerical failure at lambda = {lambda}: {reason}")]
    Numerical { lambda: f64, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(lambda: f64, reason: impl Into<String>) -> Self {
        Error::Numerical {
            lambda,
            reason: reason.into(),
        }
    }

    /// Short machine-readable category, used by the CLI for error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) | Error::DimensionMismatch { .. } | Error::InvalidParameter { .. } => {
                "validation"
            }
            Error::Numerical { .. } => "numerical",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => Error::Parse(format!("{other:?}")),
            }
        } else {
            Error::Parse(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
