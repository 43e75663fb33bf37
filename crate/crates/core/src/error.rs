use std::io;

use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes or model geometry do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A file could not be decoded. `field` names the offending part.
    #[error("parse error in {field}: {message}")]
    Parse { field: String, message: String },

    /// Invalid or inconsistent configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// API or command-line misuse.
    #[error("usage error: {0}")]
    Usage(String),

    /// NaN loss, failed gradient check and similar.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Statistical test input with nothing to test.
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Dimension(_)
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Degenerate(_)
            | Error::Io(_) => 2,
            Error::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
