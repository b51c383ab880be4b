//! Crate-wide error type and result alias.

use thiserror::Error;

/// Errors produced by model construction, training, and the run harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or layer had the wrong length for the operation.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    /// Two shapes that must agree did not; both are spelled out.
    #[error("shape mismatch: {left_name} has layers {left:?}, {right_name} has layers {right:?}")]
    ShapeMismatch {
        left_name: String,
        left: Vec<usize>,
        right_name: String,
        right: Vec<usize>,
    },

    /// A diffusion time fell outside the schedule's window.
    #[error("time {t} outside window [{t_min}, {t_max}]")]
    TimeOutOfWindow { t: f64, t_min: f64, t_max: f64 },

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A quantity that must stay finite did not.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Training blew past the divergence guard and was aborted.
    #[error("numerical divergence: {0}")]
    Divergence(String),

    /// The experiment config file was malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A checkpoint file could not be read, parsed, or validated.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code for the CLI: divergence maps to 2, everything else to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence(_) => 2,
            _ => 1,
        }
    }
}
