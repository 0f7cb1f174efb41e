use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown parameter key `{0}`")]
    UnknownParameter(String),

    #[error("invalid solver configuration: {0}")]
    InvalidSolver(String),

    #[error("singular step matrix (pivot {pivot:e} below threshold {threshold:e})")]
    SingularStepMatrix { pivot: f64, threshold: f64 },

    #[error("integration diverged at step {step}")]
    Diverged { step: usize },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid measurement set: {0}")]
    InvalidMeasurements(String),

    #[error("objective is not finite at the starting point")]
    InvalidStart,

    #[error("invalid estimation problem: {0}")]
    InvalidProblem(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
