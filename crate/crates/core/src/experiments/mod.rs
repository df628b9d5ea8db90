//! Config files, batch sweeps, theorem audits and text rendering.

mod audit;
mod config;
mod render;
mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use audit::{audit_theorem1, theorem1_window, AuditReport, AuditSpec, Finding, TightnessCheck, WindowViolation};
pub use config::RunFile;
pub use render::{render_trace, render_world};
pub use sweep::{run_batch, CellSummary, FieldStats, RunRow, SweepResult, SweepSpec};

use crate::faults::FaultParseError;
use crate::grid::RegionError;
use crate::protocol::UnknownProtocol;
use crate::scheduler::{RunError, SchedulerError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Protocol(#[from] UnknownProtocol),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Fault(#[from] FaultParseError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

impl ExperimentError {
    pub(crate) fn io(path: impl Into<PathBuf>, e: std::io::Error) -> Self {
        Self::Io { path: path.into(), message: e.to_string() }
    }
}
