use std::fmt;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::filter::AllocationMode;
use crate::world::{Control, EnvId, Layout, LanderState, PhysicsParams, TrialStatus};

pub const SCHEMA_VERSION: u32 = 1;

/// Who flies and whether the safety allocator sits in the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Paradigm {
    #[serde(rename = "user-only")]
    UserOnly,
    #[serde(rename = "shared")]
    Shared,
    #[serde(rename = "il")]
    Il,
    #[serde(rename = "il-shared")]
    IlShared,
}

impl Paradigm {
    pub const ALL: [Paradigm; 4] = [Paradigm::UserOnly, Paradigm::Shared, Paradigm::Il, Paradigm::IlShared];

    pub fn as_str(&self) -> &'static str {
        match self {
            Paradigm::UserOnly => "user-only",
            Paradigm::Shared => "shared",
            Paradigm::Il => "il",
            Paradigm::IlShared => "il-shared",
        }
    }

    /// Whether commands pass through the safety allocator.
    pub fn is_shared(&self) -> bool {
        matches!(self, Paradigm::Shared | Paradigm::IlShared)
    }

    /// Whether the learned policy supplies the commands.
    pub fn uses_policy(&self) -> bool {
        matches!(self, Paradigm::Il | Paradigm::IlShared)
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Paradigm {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == norm)
            .ok_or_else(|| SessionError::UnknownParadigm(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TrialSeeds {
    /// Seeds the environment (dynamic obstacle phase).
    pub env: u64,
    /// Seeds the control source (pilot noise).
    pub source: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub trial_id: String,
    pub env_id: EnvId,
    pub seeds: TrialSeeds,
    pub paradigm: Paradigm,
    /// `human`, a pilot kind, or a policy identifier.
    pub source: String,
    pub config_hash: String,
    /// World parameters needed to re-simulate the trial.
    pub physics: PhysicsParams,
    pub layout: Layout,
}

/// One physics step: the state the step started from and every command that
/// was considered there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub state: LanderState,
    /// Operator or learned-policy command.
    pub u_source: Control,
    /// Safety autonomy command (shared paradigms only).
    pub u_sa_a: Option<Control>,
    pub applied: Control,
    pub mode: Option<AllocationMode>,
    pub distance: f64,
    pub unsafe_flag: bool,
    /// The autonomy fell back to the PD hover on this step.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

/// Per-trial summary quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub path_length: f64,
    pub duration: f64,
    pub final_speed: f64,
    /// Absolute final heading (deg).
    pub final_heading_deg: f64,
    pub replace_count: usize,
    pub reject_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema: u32,
    pub header: TrajectoryHeader,
    pub steps: Vec<StepRecord>,
    pub final_state: LanderState,
    pub outcome: TrialStatus,
    pub metrics: TrialMetrics,
}

impl Trajectory {
    /// Recompute the summary metrics from the recorded states.
    pub fn derive_metrics(steps: &[StepRecord], final_state: &LanderState, dt: f64) -> TrialMetrics {
        let mut path_length = 0.0;
        let mut prev = steps.first().map(|s| s.state.position());
        for p in steps.iter().skip(1).map(|s| s.state.position()).chain(std::iter::once(final_state.position())) {
            if let Some(q) = prev {
                path_length += (p[0] - q[0]).hypot(p[1] - q[1]);
            }
            prev = Some(p);
        }
        let count = |m| steps.iter().filter(|s| s.mode == Some(m)).count();
        TrialMetrics {
            path_length,
            duration: steps.len() as f64 * dt,
            final_speed: final_state.speed(),
            final_heading_deg: final_state.wrapped_heading().abs().to_degrees(),
            replace_count: count(AllocationMode::Replace),
            reject_count: count(AllocationMode::Reject),
        }
    }

    pub fn applied_controls(&self) -> Vec<Control> {
        self.steps.iter().map(|s| s.applied).collect()
    }

    pub fn to_json_line(&self) -> Result<String, SessionError> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Append one trajectory as a single JSONL line.
pub fn append_trajectory(path: &Path, trajectory: &Trajectory) -> Result<(), SessionError> {
    let mut line = trajectory.to_json_line()?;
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| SessionError::io(path, e))?;
    file.write_all(line.as_bytes()).map_err(|e| SessionError::io(path, e))
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema: Option<u32>,
}

/// Read every trajectory in a JSONL log. A final line that does not parse
/// (an interrupted append) is skipped with a warning; any other bad line is
/// an error.
pub fn read_log(path: &Path) -> Result<Vec<Trajectory>, SessionError> {
    let file = std::fs::File::open(path).map_err(|e| SessionError::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| SessionError::io(path, e))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Trajectory>(line) {
            Ok(t) if t.schema == SCHEMA_VERSION => out.push(t),
            Ok(t) => return Err(SessionError::Schema { found: t.schema, expected: SCHEMA_VERSION }),
            Err(err) => {
                if let Ok(SchemaProbe { schema: Some(found) }) = serde_json::from_str::<SchemaProbe>(line) {
                    if found != SCHEMA_VERSION {
                        return Err(SessionError::Schema { found, expected: SCHEMA_VERSION });
                    }
                }
                if Some(i) == last {
                    log::warn!("{}: skipping truncated final line {}: {err}", path.display(), i + 1);
                    continue;
                }
                return Err(SessionError::Parse { path: path.to_path_buf(), line: i + 1, source: err });
            }
        }
    }
    Ok(out)
}
