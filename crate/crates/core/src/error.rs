use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the analysis pipelines.
///
/// Variants fall into three families that the command-line front end maps to
/// distinct exit codes: bad input data, bad parameters, and analyses that ran
/// but produced a degenerate (undefined) result.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: row {row}: {msg}")]
    Row { path: PathBuf, row: usize, msg: String },

    #[error("line {line}: {msg}")]
    Pairing { line: String, msg: String },

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("degenerate analysis: {0}")]
    Degenerate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Parameter,
    Degenerate,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) => ErrorKind::Parameter,
            Error::Degenerate(_) => ErrorKind::Degenerate,
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
