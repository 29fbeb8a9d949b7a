use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error(
        "degenerate posterior at estimate {f_hat}: no prior mass inside the truncation window"
    )]
    DegeneratePosterior { f_hat: f64 },

    #[error("item {item}: {source}")]
    Item {
        item: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate synthetic sample: {0}")]
    DegenerateSample(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures of the numerical machinery (fits, posteriors) as
    /// opposed to bad configuration or unreadable input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::FitFailure(_)
            | Error::DegeneratePosterior { .. }
            | Error::DegenerateSample(_) => true,
            Error::Item { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    /// True for I/O and input-format failures.
    pub fn is_input(&self) -> bool {
        match self {
            Error::Io(_) | Error::Json(_) | Error::Parse { .. } | Error::Format(_) => true,
            Error::Item { source, .. } => source.is_input(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
