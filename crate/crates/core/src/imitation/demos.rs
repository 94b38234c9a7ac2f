use serde::{Deserialize, Serialize};

use super::control_class::{encode_control, ControlClass};
use super::net::{Sample, Target};
use crate::world::{Control, LanderState};

/// One supervised pair: the state and the control that was actually applied
/// there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub state: LanderState,
    pub applied: Control,
    pub label: ControlClass,
}

/// Flattened successful trajectories used as behavior-cloning supervision.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationSet {
    /// Who produced the demonstrations (`human`, a pilot kind, a policy id).
    pub source: String,
    /// Control paradigm the demonstrations were recorded under.
    pub paradigm: String,
    pub trajectories: usize,
    pub pairs: Vec<Demonstration>,
}

impl DemonstrationSet {
    pub fn new(source: impl Into<String>, paradigm: impl Into<String>) -> Self {
        Self { source: source.into(), paradigm: paradigm.into(), ..Default::default() }
    }

    /// Add one successful trajectory given its per-step states and applied
    /// controls.
    pub fn push_trajectory<I>(&mut self, steps: I)
    where
        I: IntoIterator<Item = (LanderState, Control)>,
    {
        self.trajectories += 1;
        self.pairs.extend(steps.into_iter().map(|(state, applied)| Demonstration {
            state,
            applied,
            label: encode_control(&applied),
        }));
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn class_samples(&self) -> Vec<Sample> {
        self.pairs.iter().map(|d| Sample { state: d.state, target: Target::Class(d.label) }).collect()
    }

    pub fn regression_samples(&self) -> Vec<Sample> {
        self.pairs.iter().map(|d| Sample { state: d.state, target: Target::Control(d.applied) }).collect()
    }

    pub fn extend(&mut self, other: DemonstrationSet) {
        self.trajectories += other.trajectories;
        self.pairs.extend(other.pairs);
    }
}
