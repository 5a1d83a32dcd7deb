use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the command-line front end to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Numerical,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Usage => 1,
            ErrorCategory::Numerical => 2,
            ErrorCategory::Io => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Usage => "usage",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Io => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("axis {axis} out of range for rank {rank}")]
    Axis { axis: usize, rank: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("task label {label} out of range (max {max})")]
    LabelOutOfRange { label: usize, max: usize },
    #[error("no gate snapshot stored for task label {0}")]
    UnknownTask(usize),
    #[error("gradient reached frozen parameter `{0}`")]
    FrozenGradient(String),
    #[error("signal of length {len} too short for {levels} level(s) of a {taps}-tap filter")]
    SignalTooShort {
        len: usize,
        levels: usize,
        taps: usize,
    },
    #[error("stability bound violated: {0}")]
    Stability(String),
    #[error("solver blow-up: {0}")]
    BlowUp(String),
    #[error("covariance is not positive definite after jitter")]
    NotPositiveDefinite,
    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("format: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::NonFinite(_)
            | Error::Stability(_)
            | Error::BlowUp(_)
            | Error::NotPositiveDefinite
            | Error::FrozenGradient(_) => ErrorCategory::Numerical,
            Error::Sample { source, .. } => source.category(),
            Error::Io { .. } | Error::Format(_) => ErrorCategory::Io,
            _ => ErrorCategory::Usage,
        }
    }
}
