use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty point cloud")]
    EmptyCloud,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no temporal overlap between trajectories")]
    NoTemporalOverlap,

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
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

/// Structured parser failure. `line` is 1-based when the format is line oriented.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub format: &'static str,
    pub line: Option<usize>,
    pub message: String,
}

impl ParseError {
    pub fn new(format: &'static str, message: impl Into<String>) -> Self {
        Self {
            format,
            line: None,
            message: message.into(),
        }
    }

    pub fn at_line(format: &'static str, line: usize, message: impl Into<String>) -> Self {
        Self {
            format,
            line: Some(line),
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{} parse error at line {}: {}", self.format, line, self.message),
            None => write!(f, "{} parse error: {}", self.format, self.message),
        }
    }
}
