//! Safety-aware shared control for a simulated planar lander.
//!
//! The crate is organised bottom-up:
//!
//! - [`world`]: physics, environments and outcome classification.
//! - [`koopman`]: learned lifted-linear dynamics.
//! - [`safe_policy`]: the safety-only cost and the action synthesizer.
//! - [`filter`]: accept / reject / replace allocation between an operator and
//!   the safety autonomy.
//! - [`imitation`]: behavior cloning over a discretized control grid.
//! - [`pilots`]: scripted operators for headless runs.
//! - [`sessions`]: the trial loop, trajectory logs, replay and metrics.

// `!(x >= lo)` comparisons intentionally reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod filter;
pub mod imitation;
pub mod koopman;
pub mod pilots;
pub mod safe_policy;
pub mod sessions;
pub mod world;
