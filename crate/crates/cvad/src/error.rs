//! Crate-wide error type with stable CLI exit codes.

use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Tensor shape disagreement; `detail` names the offending axis.
    Dim { op: &'static str, detail: String },
    /// Invalid configuration (bad key, bad value, inconsistent preset).
    Config(String),
    /// Filesystem failure.
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// A file that should be a decodable 8-bit PNG is not.
    Image { path: PathBuf, detail: String },
    /// Dataset-level problem (empty folder, manifest violation).
    Dataset(String),
    /// Invalid numeric input to a loss or score (range violation).
    Input(String),
    /// Optimizer received a non-finite gradient for the named parameter.
    Optimizer { param: String },
    /// Training produced a non-finite loss.
    Diverged {
        stage: &'static str,
        epoch: usize,
        batch: usize,
    },
    /// Checkpoint file malformed or inconsistent with the requested operation.
    Checkpoint(String),
    /// Operation requires state the checkpoint does not carry (e.g. calibration).
    State(String),
    /// Metric computed over degenerate labels (single class).
    Metric(String),
}

impl Error {
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dim {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI; see the README for the full table.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) | Error::Dim { .. } => 2,
            Error::Io { .. } | Error::Image { .. } | Error::Dataset(_) => 3,
            Error::Diverged { .. } | Error::Optimizer { .. } => 4,
            Error::Checkpoint(_) | Error::State(_) => 5,
            Error::Metric(_) => 6,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dim { op, detail } => write!(f, "{op}: dimension mismatch: {detail}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io { path, source } => write!(f, "i/o error on {}: {source}", path.display()),
            Error::Image { path, detail } => write!(f, "bad image {}: {detail}", path.display()),
            Error::Dataset(msg) => write!(f, "dataset error: {msg}"),
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::Optimizer { param } => {
                write!(
                    f,
                    "optimizer error: non-finite gradient for parameter `{param}`"
                )
            }
            Error::Diverged {
                stage,
                epoch,
                batch,
            } => {
                write!(f, "training diverged: non-finite loss in {stage} stage, epoch {epoch}, batch {batch}")
            }
            Error::Checkpoint(msg) => write!(f, "checkpoint error: {msg}"),
            Error::State(msg) => write!(f, "state error: {msg}"),
            Error::Metric(msg) => write!(f, "metric error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
