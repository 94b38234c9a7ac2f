//! Behavior cloning over the discretized control grid.
//!
//! Demonstrations are (state, applied control) pairs from successful trials.
//! Labels come from the control that was actually applied, so when the
//! demonstrations were flown under shared control the safety autonomy acts as
//! the supervisor wherever it intervened. The learned policy [`PolicyNet::act`]
//! can be flown bare or routed through the same allocator as a human.

mod control_class;
mod demos;
mod net;
mod train;

use thiserror::Error;

use crate::world::{Control, LanderState};

pub use control_class::{decode_control, encode_control, ControlClass, LEVELS, NUM_CLASSES};
pub use demos::{Demonstration, DemonstrationSet};
pub use net::{
    argmax_class, loss_and_grad, softmax, Dense, Gradients, Head, InputNormalization, PolicyNet, Sample,
    Target, TrainingMeta, HIDDEN_LAYERS, INPUT_DIM, POLICY_VERSION,
};
pub use train::{top1_accuracy, train, train_bc, train_regression, TrainHyper, TrainReport};

#[derive(Debug, Error)]
pub enum ImitationError {
    #[error("demonstration set is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss})")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
    #[error("sample {index} has a target that does not match the network head")]
    TargetMismatch { index: usize },
    #[error("invalid training hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("policy file version {found} is not supported (expected {expected})")]
    Version { expected: u32, found: u32 },
    #[error("malformed policy file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// The bare imitation policy.
pub fn policy_act(net: &PolicyNet, state: &LanderState) -> Control {
    net.act(state)
}
