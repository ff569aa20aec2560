//! Closed-loop scenario runner, mitigation matrix and report emission.

mod config;
mod emit;
mod matrix;
mod run;

use std::path::PathBuf;

use thiserror::Error;

use crate::control::ControlError;
use crate::dynamics::DynamicsError;
use crate::faults::FaultError;
use crate::stpa::ModelError;

pub use config::{Environment, Mitigations, RunConfig, RunSettings, MITIGATION_NAMES};
pub use emit::{emit_report, emit_table, Format};
pub use matrix::{parse_mitigation_sets, parse_seed_range, run_batch, run_matrix, summarize, MatrixRow, MatrixTable, MitigationSet};
pub use run::{run, run_with_trace, Outcome, RunMetrics, RunReport, Sample, Stage, UcaTrigger};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("unknown mitigation `{0}`")]
    UnknownMitigation(String),
    #[error("invalid {section}: {reason}")]
    Invalid { section: &'static str, reason: String },
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("run {scenario} / {set} / seed {seed}: {source}")]
    Row {
        scenario: String,
        set: String,
        seed: u64,
        source: Box<HarnessError>,
    },
    #[error("{0}")]
    Usage(String),
}
