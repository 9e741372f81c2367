use std::path::PathBuf;

/// Errors produced anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("numeric divergence at {stage} (step {step})")]
    NumericDivergence { stage: &'static str, step: usize },

    #[error("power violation: device {device} transmitted {power:.6e} > budget {budget:.6e} (excess {excess:.3e})")]
    PowerViolation {
        device: usize,
        power: f64,
        budget: f64,
        excess: f64,
    },

    #[error("schedule violates a*lambda > 4Q: a*lambda = {a_lambda}, 4Q = {four_q}")]
    Schedule { a_lambda: f64, four_q: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by the inputs rather than by a run failing.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Schedule { .. } | Error::InvalidArgument(_) | Error::Format { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
