//! Experiment harness: canonical benchmark models, reproducible sweeps over
//! (pipeline, T, seed) grids, log-log rate-slope fits, and comparison
//! reports.

pub mod models;
pub mod report;
pub mod slope;
pub mod sweep;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Pipeline(#[from] mixcal_core::PipelineError),
    #[error(transparent)]
    Model(#[from] mixcal_core::ModelError),
    #[error(transparent)]
    Cover(#[from] mixcal_core::CoverError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("csv schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },
    #[error("slope fit: {0}")]
    SlopeFit(String),
}
