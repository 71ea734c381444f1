use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A factorization or solve failed even after jitter escalation.
    #[error("numerical error: {message}{}", condition.map(|c| format!(" (condition estimate {c:.3e})")).unwrap_or_default())]
    Numerical {
        message: String,
        condition: Option<f64>,
    },

    /// The requested problem size exceeds a configured cap.
    #[error("capacity error: {what} = {requested} exceeds the cap of {cap}; raise it with {flag}")]
    Capacity {
        what: &'static str,
        requested: usize,
        cap: usize,
        flag: &'static str,
    },

    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input file. `line` is 1-based.
    #[error("{}:{line}: {message}", path.display())]
    Ingest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {}: {source}", path.display())]
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
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>, condition: Option<f64>) -> Self {
        Error::Numerical {
            message: msg.into(),
            condition,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical kernels (as opposed to bad input or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. })
    }
}
