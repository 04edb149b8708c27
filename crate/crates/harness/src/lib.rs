//! Running episodes and experiments over task datasets, and turning the
//! results into CSV tables and curve files.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod report;
pub mod runner;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("dataset {path}: {reason}")]
    Dataset { path: String, reason: String },
    #[error(transparent)]
    Scene(#[from] objdis_core::scene::SceneError),
    #[error(transparent)]
    Task(#[from] objdis_core::task::TaskError),
    #[error("empty results")]
    EmptyResults,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
