use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Several independent problems found while validating a run
    /// configuration; all of them are reported at once.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable lowercase tag used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Format(_) => "format",
            Error::Shape(_) => "shape",
            Error::Data(_) => "data",
            Error::Range(_) => "range",
            Error::Unsupported(_) => "unsupported",
            Error::Io { .. } => "io",
            Error::Config(_) => "config",
        }
    }
}
