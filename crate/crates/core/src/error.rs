use std::io;

use crate::domain::Scheme;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pump {pump} {quantity} {value} outside [{min}, {max}]")]
    OutOfRange {
        pump: usize,
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("solver diverged after {iterations} iterations (residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scheme mismatch: expected {expected}, found {found}")]
    SchemeMismatch { expected: Scheme, found: Scheme },

    #[error("format error: {0}")]
    Format(String),

    #[error("training failed at epoch {epoch}: {reason}")]
    TrainingFailed {
        epoch: usize,
        reason: String,
        history: Vec<(f64, f64)>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::InvalidArgument(_)
            | Error::OutOfRange { .. }
            | Error::SchemeMismatch { .. }
            | Error::Format(_) => true,
            Error::Sample { source, .. } => source.is_usage(),
            Error::Io(_) => true,
            Error::SolverDiverged { .. } | Error::TrainingFailed { .. } => false,
        }
    }
}
