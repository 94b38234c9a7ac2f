use serde::{Deserialize, Serialize};

use super::{physics::is_legal_contact, Environment, LanderState, PhysicsParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashReason {
    ObstacleContact,
    GroundImpact,
    OutOfBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum TrialStatus {
    Running,
    Success,
    Crash(CrashReason),
    Timeout,
}

impl TrialStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, TrialStatus::Running)
    }

    pub fn is_success(&self) -> bool {
        matches!(self, TrialStatus::Success)
    }

    pub fn is_crash(&self) -> bool {
        matches!(self, TrialStatus::Crash(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            TrialStatus::Running => "running",
            TrialStatus::Success => "success",
            TrialStatus::Crash(CrashReason::ObstacleContact) => "crash_obstacle",
            TrialStatus::Crash(CrashReason::GroundImpact) => "crash_ground",
            TrialStatus::Crash(CrashReason::OutOfBounds) => "crash_out_of_bounds",
            TrialStatus::Timeout => "timeout",
        }
    }
}

/// Classify a state at simulated time `elapsed`.
///
/// Crashes take precedence over success, success over timeout. Contact with
/// the ground at or below the impact limits is a landing, not a crash.
pub fn classify_outcome(
    state: &LanderState,
    env: &Environment,
    params: &PhysicsParams,
    elapsed: f64,
) -> TrialStatus {
    let p = state.position();
    let r = params.lander_radius;
    if env.obstacle_clearance(p, r, elapsed).is_some_and(|c| c <= 0.0) {
        return TrialStatus::Crash(CrashReason::ObstacleContact);
    }
    if env.ground_clearance(p, r) <= 0.0 && !is_legal_contact(state, params) {
        return TrialStatus::Crash(CrashReason::GroundImpact);
    }
    if !env.bounds.contains(p) {
        return TrialStatus::Crash(CrashReason::OutOfBounds);
    }
    if env.goal.is_past(p) {
        return TrialStatus::Success;
    }
    if elapsed > params.trial_timeout {
        return TrialStatus::Timeout;
    }
    TrialStatus::Running
}

/// Holds a trial's status; once terminal it never changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutcomeLatch {
    status: TrialStatus,
}

impl Default for OutcomeLatch {
    fn default() -> Self {
        Self { status: TrialStatus::Running }
    }
}

impl OutcomeLatch {
    pub fn update(
        &mut self,
        state: &LanderState,
        env: &Environment,
        params: &PhysicsParams,
        elapsed: f64,
    ) -> TrialStatus {
        if !self.status.is_terminal() {
            self.status = classify_outcome(state, env, params, elapsed);
        }
        self.status
    }

    pub fn status(&self) -> TrialStatus {
        self.status
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{make_environment, EnvId, Layout};

    fn world(id: EnvId) -> (Environment, PhysicsParams) {
        let p = PhysicsParams::default();
        (make_environment(id, &Layout::default(), &p, 0).unwrap(), p)
    }

    #[test]
    fn past_goal_line_is_success() {
        let (env, p) = world(EnvId::Open);
        let s = LanderState::at_rest(env.goal.x + 0.01, 10.0);
        assert_eq!(classify_outcome(&s, &env, &p, 12.0), TrialStatus::Success);
    }

    #[test]
    fn overlapping_wall_is_obstacle_crash() {
        let (env, p) = world(EnvId::NarrowPassage);
        let s = LanderState::at_rest(17.5, 5.0);
        assert_eq!(classify_outcome(&s, &env, &p, 1.0), TrialStatus::Crash(CrashReason::ObstacleContact));
    }

    #[test]
    fn airborne_after_timeout() {
        let (env, p) = world(EnvId::Open);
        let s = LanderState::at_rest(10.0, 10.0);
        assert_eq!(classify_outcome(&s, &env, &p, p.trial_timeout + p.dt), TrialStatus::Timeout);
        assert_eq!(classify_outcome(&s, &env, &p, p.trial_timeout), TrialStatus::Running);
    }

    #[test]
    fn ground_contact_depends_on_speed_and_tilt() {
        let (env, p) = world(EnvId::Open);
        let soft = LanderState::new(10.0, p.lander_radius, 0.1, 0.5, 0.0, 0.0);
        assert_eq!(classify_outcome(&soft, &env, &p, 1.0), TrialStatus::Running);
        let hard = LanderState::new(10.0, p.lander_radius - 0.01, 0.0, 0.0, -3.0, 0.0);
        assert_eq!(classify_outcome(&hard, &env, &p, 1.0), TrialStatus::Crash(CrashReason::GroundImpact));
        let tilted = LanderState::new(10.0, p.lander_radius, 0.6, 0.0, 0.0, 0.0);
        assert_eq!(classify_outcome(&tilted, &env, &p, 1.0), TrialStatus::Crash(CrashReason::GroundImpact));
    }

    #[test]
    fn leaving_bounds_is_a_crash() {
        let (env, p) = world(EnvId::Open);
        let s = LanderState::at_rest(-0.5, 10.0);
        assert_eq!(classify_outcome(&s, &env, &p, 1.0), TrialStatus::Crash(CrashReason::OutOfBounds));
    }

    #[test]
    fn latch_is_absorbing() {
        let (env, p) = world(EnvId::Open);
        let mut latch = OutcomeLatch::default();
        let past = LanderState::at_rest(env.goal.x + 1.0, 10.0);
        assert_eq!(latch.update(&past, &env, &p, 1.0), TrialStatus::Success);
        let crashed = LanderState::at_rest(-5.0, 10.0);
        assert_eq!(latch.update(&crashed, &env, &p, 2.0), TrialStatus::Success);
    }
}
