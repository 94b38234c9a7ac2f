//! The trial loop and everything around it: configuration, trajectory logs,
//! replay verification, datasets and metrics.
//!
//! Each step obtains a source command (pilot, remote person or learned
//! policy), routes it through the allocator when the paradigm is shared,
//! integrates the physics and classifies the outcome. The full record goes to
//! a JSONL log, one trajectory per line.

mod config;
mod dataset;
mod metrics;
mod trajectory;
mod trial;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{KoopmanConfig, LabConfig, LiveConfig};
pub use dataset::{demonstrations, load_trajectories, transitions, DatasetFilter, OutcomeFilter};
pub use metrics::{compute_metrics, render_table, GroupBy, MeanSd, MetricsRow};
pub use trajectory::{
    append_trajectory, read_log, Paradigm, StepRecord, TrialMetrics, TrialSeeds, Trajectory, TrajectoryHeader,
    SCHEMA_VERSION,
};
pub use trial::{replay_trajectory, run_trial, CommandSource, InputHold, ReplayReport, TrialSession};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("paradigm `{0}` needs a Koopman model")]
    MissingModel(Paradigm),
    #[error("unknown paradigm `{0}` (expected user-only, shared, il or il-shared)")]
    UnknownParadigm(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("log schema version {found} is not supported (expected {expected}); re-record or migrate the log")]
    Schema { found: u32, expected: u32 },
    #[error("{}:{line}: {source}", path.display())]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("trial is still running")]
    NotFinished,
    #[error(transparent)]
    World(#[from] crate::world::WorldError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SessionError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        SessionError::Io { path: path.to_path_buf(), source }
    }
}
