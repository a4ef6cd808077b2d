//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("loss of positivity in {context}: w^T v = {value:e}")]
    LossOfPositivity { context: &'static str, value: f64 },

    #[error("numerical breakdown: {0}")]
    Breakdown(String),

    #[error("model instability: non-finite state at time step {step}")]
    Instability { step: usize },

    #[error("not a descent direction: g^T dx = {0:e}")]
    NotDescent(f64),

    #[error("invalid variant `{name}`: {reason}")]
    Variant { name: String, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what}: length {got}, expected {expected}")))
    }
}
