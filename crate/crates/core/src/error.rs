//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("qubit count mismatch: {left} vs {right}")]
    QubitCountMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid value for {name}: {value}")]
    InvalidValue { name: &'static str, value: f64 },

    #[error("{0}")]
    InvalidInput(String),

    #[error("solver failure{}: {reason}", .time.map(|t| format!(" at t={t}")).unwrap_or_default())]
    SolverFailure { time: Option<f64>, reason: String },

    #[error("numerical inconsistency: {0}")]
    NumericalInconsistency(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

impl SimError {
    pub(crate) fn invalid(name: &'static str, value: f64) -> Self {
        SimError::InvalidValue { name, value }
    }
}
