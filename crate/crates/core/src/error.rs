use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid frame: unit {unit}: {reason}")]
    InvalidFrame { unit: usize, reason: String },

    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("line {line}: field `{field}` failed validation: {message}")]
    Validation {
        line: usize,
        field: String,
        message: String,
    },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("registry: {0}")]
    Registry(String),

    #[error("non-finite gradient in tensor `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Errors caused by malformed files or I/O, as opposed to bad arguments
    /// or inconsistent data.
    pub fn is_io_or_format(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Format { .. } | Error::Parse { .. })
    }
}
