use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trajectory::{read_log, Paradigm, Trajectory};
use super::SessionError;
use crate::imitation::DemonstrationSet;
use crate::koopman::{Transition, TransitionDataset};
use crate::world::{Control, EnvId, TrialStatus};

/// Which outcomes a loader keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeFilter {
    Success,
    Crash,
    Timeout,
}

impl OutcomeFilter {
    pub fn matches(&self, status: &TrialStatus) -> bool {
        match self {
            OutcomeFilter::Success => status.is_success(),
            OutcomeFilter::Crash => status.is_crash(),
            OutcomeFilter::Timeout => *status == TrialStatus::Timeout,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetFilter {
    pub env: Option<EnvId>,
    pub paradigm: Option<Paradigm>,
    pub outcome: Option<OutcomeFilter>,
    pub source: Option<String>,
}

impl DatasetFilter {
    pub fn matches(&self, t: &Trajectory) -> bool {
        self.env.is_none_or(|e| e == t.header.env_id)
            && self.paradigm.is_none_or(|p| p == t.header.paradigm)
            && self.outcome.is_none_or(|o| o.matches(&t.outcome))
            && self.source.as_ref().is_none_or(|s| *s == t.header.source)
    }
}

/// Read and filter trajectories from any number of logs.
pub fn load_trajectories<P: AsRef<Path>>(paths: &[P], filter: &DatasetFilter) -> Result<Vec<Trajectory>, SessionError> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_log(p.as_ref())?.into_iter().filter(|t| filter.matches(t)));
    }
    Ok(out)
}

/// Behavior-cloning supervision from the successful trajectories; labels are
/// the applied controls.
pub fn demonstrations(trajectories: &[Trajectory]) -> DemonstrationSet {
    let first = trajectories.first();
    let mut set = DemonstrationSet::new(
        first.map(|t| t.header.source.clone()).unwrap_or_default(),
        first.map(|t| t.header.paradigm.as_str().to_string()).unwrap_or_default(),
    );
    for t in trajectories.iter().filter(|t| t.outcome.is_success()) {
        set.push_trajectory(t.steps.iter().map(|s| (s.state, s.applied)));
    }
    set
}

/// Consecutive-step transitions for model fitting: `N` recorded steps give
/// `N - 1` transitions per trajectory. Steps that start or end in ground
/// contact are left out when `skip_contact` is set, and the main throttle is
/// recorded as the engine saw it (negative commands are idle).
pub fn transitions(trajectories: &[Trajectory], skip_contact: bool) -> TransitionDataset {
    let dt = trajectories.first().map_or(1.0 / 60.0, |t| t.header.physics.dt);
    let mut data = TransitionDataset::new(dt);
    for (id, t) in trajectories.iter().enumerate() {
        let floor = t.header.layout.ground_height + t.header.physics.lander_radius;
        for (k, pair) in t.steps.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            if skip_contact && (a.state.y <= floor || b.state.y <= floor) {
                continue;
            }
            data.transitions.push(Transition {
                state: a.state,
                control: Control::new(a.applied.main.max(0.0), a.applied.side),
                next: b.state,
                trajectory: Some(id as u64),
                step: k,
            });
        }
    }
    data
}
