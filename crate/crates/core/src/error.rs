use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{0}: recording contains no observations")]
    EmptyRecording(PathBuf),
    #[error("insufficient history: oracle needs {needed} frames, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("sequence length mismatch: predicted {predicted}, actual {actual}")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no external forecast for trial {trial} step {step} group {label}")]
    MissingForecast {
        trial: String,
        step: usize,
        label: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
