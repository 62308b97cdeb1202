//! Experiment orchestration around the `avqds` library: configuration
//! ingestion, the parallel trajectory farm, and serialization of results
//! as CSV time series plus JSON manifests.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

/// Process-level error classification; maps onto exit codes.
#[derive(Debug, Error)]
pub enum AppError {
    /// Bad configuration or arguments → exit code 1.
    #[error("validation error: {0}")]
    Validation(String),
    /// Anything that failed while running → exit code 2.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Validation(_) => 1,
            AppError::Runtime(_) => 2,
        }
    }
}

impl From<avqds::SimError> for AppError {
    fn from(e: avqds::SimError) -> Self {
        AppError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Runtime(format!("io: {e}"))
    }
}

pub type AppResult<T> = Result<T, AppError>;
