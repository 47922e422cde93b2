use thiserror::Error;

use crate::metric::simplex::LpError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A time index fell outside the lifetime of a trajectory or a mode index
    /// outside the mode set.
    #[error("{what} {index} outside valid range [{lo}, {hi}]")]
    Range {
        what: &'static str,
        index: usize,
        lo: usize,
        hi: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sequencing error: expected time {expected}, got {got}")]
    Sequencing { expected: usize, got: usize },

    #[error("instance too large for exhaustive search: {0}")]
    Size(String),

    #[error("linear program: {0}")]
    Lp(#[from] LpError),

    #[error("i/o: {0}")]
    Io(String),

    /// Malformed CSV or JSON input.
    #[error("malformed input: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::Format(e.to_string())
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.to_string())
        } else {
            Error::Format(e.to_string())
        }
    }
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
