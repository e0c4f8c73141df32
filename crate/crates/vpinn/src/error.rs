//! Crate-wide error type.

use std::fmt;
use std::io;

/// Errors produced by configuration, ingestion, assembly and training.
#[derive(Debug)]
pub enum Error {
    /// Invalid configuration value (counts, domains, widths, paths).
    Config(String),
    /// Structural misuse of an API (out-of-range ids, mismatched lengths).
    Structural(String),
    /// A data file could not be parsed or does not cover the requested range.
    Ingestion(String),
    /// Input data failed a validation rule (unsorted grid, nonpositive property).
    Validation(String),
    /// The Picard loop did not converge at a time step.
    PicardDiverged {
        step: usize,
        last_change: f64,
    },
    /// A non-finite loss or gradient was encountered during training.
    TrainingDiverged {
        iteration: usize,
        detail: String,
    },
    /// A relative error was requested against a zero reference norm.
    UndefinedRatio(String),
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Structural(msg) => write!(f, "structural error: {msg}"),
            Error::Ingestion(msg) => write!(f, "ingestion error: {msg}"),
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::PicardDiverged { step, last_change } => write!(
                f,
                "picard iteration did not converge at time step {step} (last change {last_change:e})"
            ),
            Error::TrainingDiverged { iteration, detail } => {
                write!(f, "training diverged at iteration {iteration}: {detail}")
            }
            Error::UndefinedRatio(msg) => write!(f, "undefined ratio: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
