use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },

    #[error("length mismatch for `{what}`: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("parse error in field `{field}`: {reason}")]
    Parse { field: String, reason: String },

    #[error("line {line}: {reason}")]
    ParseLine { line: usize, reason: String },

    #[error("unsupported {field}: {value}")]
    Unsupported { field: String, value: String },

    #[error("size mismatch: header declares {expected} values but payload holds {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("graph is empty: {0}")]
    EmptyGraph(&'static str),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the filesystem rather than the content of an input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }

    /// Short, stable identifier of the error class, used in JSON reports.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::DimMismatch { .. } => "dim-mismatch",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::InvalidVolume(_) => "invalid-volume",
            // everything that makes a file's content unreadable is a parse error
            Error::Parse { .. }
            | Error::ParseLine { .. }
            | Error::Unsupported { .. }
            | Error::SizeMismatch { .. } => "parse",
            Error::EmptyGraph(_) => "empty-graph",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Generation(_) => "generation",
            Error::Io { .. } => "io",
        }
    }
}
