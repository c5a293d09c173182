//! Crate-wide error type.

use std::fmt;

#[derive(Debug, Clone)]
pub enum NodaError {
    /// Tensor shapes do not conform for the requested operation.
    Dim(String),
    /// Input outside the mathematical domain (log of non-positive, off-circle
    /// observation, non-finite action, ...).
    Domain(String),
    /// API contract violation (non-scalar backward root, empty batch,
    /// missing gradient, duplicate parameter name, ...).
    Contract(String),
    /// An operation produced NaN/Inf.
    NonFinite(String),
    /// The integrator left the finite domain mid-trajectory.
    Divergence { substep: usize, detail: String },
    /// Malformed or incompatible checkpoint/dataset file.
    Format { offset: u64, detail: String },
    /// Checkpoint parameter incompatible with the target model.
    IncompatibleCheckpoint { name: String, detail: String },
    /// Bad configuration file line.
    Config { line: usize, detail: String },
    /// All candidate state pairs are closer than `min_sep`.
    InsufficientSpread,
    Io(String),
}

impl fmt::Display for NodaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodaError::Dim(msg) => write!(f, "dimension error: {msg}"),
            NodaError::Domain(msg) => write!(f, "domain error: {msg}"),
            NodaError::Contract(msg) => write!(f, "contract error: {msg}"),
            NodaError::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            NodaError::Divergence { substep, detail } => {
                write!(f, "integrator diverged at substep {substep}: {detail}")
            }
            NodaError::Format { offset, detail } => {
                write!(f, "bad file at byte {offset}: {detail}")
            }
            NodaError::IncompatibleCheckpoint { name, detail } => {
                write!(f, "incompatible checkpoint entry `{name}`: {detail}")
            }
            NodaError::Config { line, detail } => {
                write!(f, "config error at line {line}: {detail}")
            }
            NodaError::InsufficientSpread => {
                write!(f, "all state pairs closer than min_sep; cannot estimate a ratio")
            }
            NodaError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for NodaError {}

impl From<std::io::Error> for NodaError {
    fn from(e: std::io::Error) -> Self {
        NodaError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, NodaError>;
