//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix not symmetric within {tol:e} (max asymmetry {max_asym:e})")]
    NotSymmetric { tol: f64, max_asym: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off:e})")]
    NoConvergence { sweeps: usize, off: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("missing file {path}")]
    MissingFile { path: PathBuf },

    #[error("{path}: {msg}")]
    DataFormat { path: PathBuf, msg: String },

    #[error("size mismatch in {path}: expected {expected} bytes, file has {got}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        got: u64,
    },

    #[error("example {example}: unknown class {class}")]
    UnknownClass { example: String, class: String },

    #[error("example {example}: unseen class {class} assigned to train split")]
    UnseenInTrain { example: String, class: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint version {got} unsupported (expected {expected})")]
    Version { expected: u32, got: u32 },

    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: String },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration and validation
    /// problems, 3 for numeric blow-ups, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape { .. }
            | Error::InvalidConfig(_)
            | Error::MissingFile { .. }
            | Error::DataFormat { .. }
            | Error::SizeMismatch { .. }
            | Error::UnknownClass { .. }
            | Error::UnseenInTrain { .. }
            | Error::Checkpoint(_)
            | Error::Version { .. }
            | Error::Protocol(_)
            | Error::EmptyInput(_) => 2,
            Error::NonFinite(_)
            | Error::NoConvergence { .. }
            | Error::NonFiniteGradient { .. }
            | Error::Numerical(_) => 3,
            _ => 1,
        }
    }
}
