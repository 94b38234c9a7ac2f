//! Safety-aware Maxwell's Demon allocation.
//!
//! When the lander is inside the safety margin the autonomy's command replaces
//! the operator's. Otherwise the operator's command passes if it agrees in
//! direction with the autonomy (non-negative inner product) and is zeroed if
//! it does not. The allocator never inspects where its input came from, so a
//! learned policy is filtered exactly like a human.

use serde::{Deserialize, Serialize};

use crate::koopman::KoopmanModel;
use crate::safe_policy::{sac_action, SafeAction, SafetyCostParams};
use crate::world::{Control, Environment, LanderState, PhysicsParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMode {
    Accept,
    Reject,
    Replace,
}

impl AllocationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AllocationMode::Accept => "accept",
            AllocationMode::Reject => "reject",
            AllocationMode::Replace => "replace",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationDecision {
    pub applied: Control,
    pub mode: AllocationMode,
    pub unsafe_flag: bool,
    pub inner_product: f64,
    /// Clearance to the nearest obstacle (m); NaN when the decision was made
    /// by [`allocate`] alone.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyConfig {
    /// Clearance below which the state counts as unsafe (m).
    pub d_safe: f64,
    /// Once unsafe, the state stays unsafe until clearance reaches
    /// `d_safe + hysteresis`. Zero disables the band.
    pub hysteresis: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        // 1.5 lander radii with the default 1 m radius.
        Self { d_safe: 1.5, hysteresis: 0.0 }
    }
}

impl SafetyConfig {
    pub fn for_radius(lander_radius: f64) -> Self {
        Self { d_safe: 1.5 * lander_radius, hysteresis: 0.0 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.d_safe > 0.0 && self.d_safe.is_finite()) {
            return Err(format!("d_safe must be positive, got {}", self.d_safe));
        }
        if !(self.hysteresis >= 0.0) {
            return Err(format!("hysteresis must be non-negative, got {}", self.hysteresis));
        }
        Ok(())
    }
}

/// Geometric unsafe predicate: clearance strictly below `d_safe`.
pub fn is_unsafe(
    state: &LanderState,
    env: &Environment,
    physics: &PhysicsParams,
    t: f64,
    config: &SafetyConfig,
) -> (bool, f64) {
    let d = env.nearest_obstacle(state.position(), physics.lander_radius, t).clearance();
    (d < config.d_safe, d)
}

/// Three-branch allocation rule.
pub fn allocate(u_input: Control, u_autonomy: Control, unsafe_flag: bool) -> AllocationDecision {
    let inner_product = u_input.dot(&u_autonomy);
    let (applied, mode) = if unsafe_flag {
        (u_autonomy, AllocationMode::Replace)
    } else if inner_product >= 0.0 {
        (u_input, AllocationMode::Accept)
    } else {
        (Control::ZERO, AllocationMode::Reject)
    };
    AllocationDecision { applied, mode, unsafe_flag, inner_product, distance: f64::NAN }
}

/// Unsafe predicate with an optional hysteresis band. With a zero band it is
/// identical to [`is_unsafe`].
#[derive(Debug, Clone, Default)]
pub struct UnsafeMonitor {
    latched: bool,
}

impl UnsafeMonitor {
    pub fn update(&mut self, distance: f64, config: &SafetyConfig) -> bool {
        let threshold = if self.latched { config.d_safe + config.hysteresis } else { config.d_safe };
        self.latched = distance < threshold;
        self.latched
    }
}

/// Everything one shared-control step produced, for telemetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedStep {
    pub decision: AllocationDecision,
    pub u_source: Control,
    pub autonomy: SafeAction,
}

/// The components the shared-control step needs besides the state.
#[derive(Debug, Clone, Copy)]
pub struct SharedController<'a> {
    pub model: &'a KoopmanModel,
    pub cost: &'a SafetyCostParams,
    pub safety: &'a SafetyConfig,
    pub physics: &'a PhysicsParams,
}

impl SharedController<'_> {
    /// Compute the autonomy's command, test safety and allocate. Uses the
    /// plain predicate; see [`Self::step_with_monitor`] for hysteresis.
    pub fn step(&self, state: &LanderState, env: &Environment, t: f64, u_source: Control) -> SharedStep {
        let (flag, distance) = is_unsafe(state, env, self.physics, t, self.safety);
        self.finish(state, env, t, u_source, flag, distance)
    }

    pub fn step_with_monitor(
        &self,
        monitor: &mut UnsafeMonitor,
        state: &LanderState,
        env: &Environment,
        t: f64,
        u_source: Control,
    ) -> SharedStep {
        let (_, distance) = is_unsafe(state, env, self.physics, t, self.safety);
        let flag = monitor.update(distance, self.safety);
        self.finish(state, env, t, u_source, flag, distance)
    }

    fn finish(
        &self,
        state: &LanderState,
        env: &Environment,
        t: f64,
        u_source: Control,
        flag: bool,
        distance: f64,
    ) -> SharedStep {
        let u_source = u_source.clamped();
        let autonomy = sac_action(self.model, state, env, t, self.cost);
        let mut decision = allocate(u_source, autonomy.control.clamped(), flag);
        decision.distance = distance;
        SharedStep { decision, u_source, autonomy }
    }
}

/// Free-function form of [`SharedController::step`].
#[allow(clippy::too_many_arguments)]
pub fn shared_policy_step(
    state: &LanderState,
    env: &Environment,
    t: f64,
    u_source: Control,
    model: &KoopmanModel,
    cost: &SafetyCostParams,
    safety: &SafetyConfig,
    physics: &PhysicsParams,
) -> SharedStep {
    SharedController { model, cost, safety, physics }.step(state, env, t, u_source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{make_environment, EnvId, Layout};

    #[test]
    fn unsafe_branch_replaces() {
        let d = allocate(Control::new(1.0, 1.0), Control::new(0.2, -0.3), true);
        assert_eq!(d.mode, AllocationMode::Replace);
        assert_eq!(d.applied, Control::new(0.2, -0.3));
    }

    #[test]
    fn agreeing_input_is_accepted() {
        let d = allocate(Control::new(0.5, 0.0), Control::new(1.0, 0.0), false);
        assert_eq!(d.inner_product, 0.5);
        assert_eq!((d.mode, d.applied), (AllocationMode::Accept, Control::new(0.5, 0.0)));
    }

    #[test]
    fn conflicting_input_is_rejected() {
        let d = allocate(Control::new(0.5, 0.0), Control::new(-1.0, 0.0), false);
        assert_eq!(d.inner_product, -0.5);
        assert_eq!((d.mode, d.applied), (AllocationMode::Reject, Control::ZERO));
    }

    #[test]
    fn quiescent_autonomy_accepts_anything() {
        for u in [Control::new(-1.0, 1.0), Control::new(0.3, -0.9), Control::ZERO] {
            assert_eq!(allocate(u, Control::ZERO, false).mode, AllocationMode::Accept);
        }
    }

    fn open() -> (Environment, PhysicsParams) {
        let p = PhysicsParams::default();
        (make_environment(EnvId::Open, &Layout::default(), &p, 0).unwrap(), p)
    }

    #[test]
    fn unsafe_predicate_is_strict() {
        let (env, p) = open();
        let cfg = SafetyConfig { d_safe: 1.5, hysteresis: 0.0 };
        let at = |clearance: f64| LanderState::at_rest(10.0, p.lander_radius + clearance);
        assert_eq!(is_unsafe(&at(10.0), &env, &p, 0.0, &cfg), (false, 10.0));
        assert_eq!(is_unsafe(&at(1.0), &env, &p, 0.0, &cfg), (true, 1.0));
        assert_eq!(is_unsafe(&at(1.5), &env, &p, 0.0, &cfg), (false, 1.5));
    }

    #[test]
    fn hysteresis_band_holds_the_flag() {
        let cfg = SafetyConfig { d_safe: 1.5, hysteresis: 0.5 };
        let mut m = UnsafeMonitor::default();
        assert!(!m.update(1.6, &cfg));
        assert!(m.update(1.4, &cfg));
        assert!(m.update(1.8, &cfg));
        assert!(!m.update(2.0, &cfg));
        let plain = SafetyConfig::default();
        let mut m = UnsafeMonitor::default();
        assert!(m.update(1.4, &plain));
        assert!(!m.update(1.5, &plain));
    }

    #[test]
    fn shared_step_at_quiescent_hover_passes_input() {
        let (env, p) = open();
        let model = KoopmanModel::identity(p.dt);
        let cost = SafetyCostParams::default();
        let safety = SafetyConfig::default();
        let s = LanderState::at_rest(10.0, 28.0);
        let u = Control::new(0.4, -0.7);
        let out = shared_policy_step(&s, &env, 0.0, u, &model, &cost, &safety, &p);
        assert_eq!(out.decision.mode, AllocationMode::Accept);
        assert!(out.decision.applied.bit_eq(&u));
    }

    #[test]
    fn shared_step_inside_margin_replaces() {
        let (env, p) = open();
        let model = KoopmanModel::identity(p.dt);
        let cost = SafetyCostParams::default();
        let safety = SafetyConfig::default();
        let s = LanderState::new(10.0, p.lander_radius + 0.5, 0.2, 0.0, -0.5, 0.0);
        for u in [Control::new(1.0, 1.0), Control::new(-1.0, 0.0)] {
            let out = shared_policy_step(&s, &env, 0.0, u, &model, &cost, &safety, &p);
            assert_eq!(out.decision.mode, AllocationMode::Replace);
            assert!(out.decision.applied.bit_eq(&out.autonomy.control));
        }
    }
}
