//! Experiment configs, a threaded driver, CSV/report output and table
//! reproduction on top of `ruinlab-core`.

pub mod app;
pub mod config;
pub mod driver;
pub mod exposure;
pub mod output;
pub mod presets;

use thiserror::Error;

pub use config::{EstimatorSpec, ExperimentConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AppError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),
    #[error("io error: {0}")]
    Io(String),
}

impl AppError {
    /// Process exit code: 2 for schema errors, 3 for hypothesis violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Schema(_) => 2,
            Self::Hypothesis(_) => 3,
            Self::Io(_) => 1,
        }
    }
}
