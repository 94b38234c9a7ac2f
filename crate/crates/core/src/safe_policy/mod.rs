//! Safety-only autonomous policy: the stabilization-plus-barrier objective and
//! the sequential-action-control synthesizer that produces the autonomy's
//! command. Nothing here knows where the goal is.

mod cost;
mod sac;

pub use cost::{
    barrier_cost, cost_gradient, running_cost, stabilization_cost, terminal_cost, terminal_gradient,
    BarrierForm, SafetyCostParams,
};
pub use sac::{fallback_control, horizon_steps, obstacle_anchor, predicted_cost, sac_action, SafeAction};
