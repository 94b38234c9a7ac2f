//! Scripted operators that stand in for a person at the controls.
//!
//! Every pilot is deterministic given its seed. [`Pilot`] carries the mutable
//! bits (random stream, perception buffer, replay cursor) so one instance
//! flies exactly one trial.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Control, Environment, LanderState, PhysicsParams};

#[derive(Debug, Error)]
pub enum PilotError {
    #[error("unknown pilot kind `{0}`")]
    UnknownKind(String),
    #[error("invalid pilot parameter: {0}")]
    InvalidParam(String),
    #[error("replay pilot needs a reference trajectory")]
    MissingReplay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotKind {
    ExpertPd,
    NoisyNovice,
    Adversarial,
    Replay,
}

impl PilotKind {
    pub const ALL: [PilotKind; 4] = [PilotKind::ExpertPd, PilotKind::NoisyNovice, PilotKind::Adversarial, PilotKind::Replay];

    pub fn as_str(&self) -> &'static str {
        match self {
            PilotKind::ExpertPd => "expert_pd",
            PilotKind::NoisyNovice => "noisy_novice",
            PilotKind::Adversarial => "adversarial",
            PilotKind::Replay => "replay",
        }
    }
}

impl fmt::Display for PilotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PilotKind {
    type Err = PilotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == norm || (norm == "expert" && *k == PilotKind::ExpertPd))
            .ok_or_else(|| PilotError::UnknownKind(s.to_string()))
    }
}

/// Gains of the waypoint-following PD pilot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PdGains {
    /// Horizontal cruise speed toward the goal (m/s).
    pub cruise_speed: f64,
    /// Horizontal velocity gain (1/s).
    pub k_vx: f64,
    /// Altitude proportional gain (1/s^2).
    pub k_y: f64,
    /// Vertical velocity gain (1/s).
    pub k_vy: f64,
    /// Heading gain on the side thruster.
    pub k_heading: f64,
    /// Angular-rate damping on the side thruster.
    pub k_omega: f64,
    /// Largest commanded tilt (rad).
    pub max_tilt: f64,
    /// Largest commanded horizontal acceleration (m/s^2).
    pub max_accel: f64,
    /// Vertical clearance kept over crossing traffic (m).
    pub dodge_margin: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            cruise_speed: 2.0,
            k_vx: 0.8,
            k_y: 1.0,
            k_vy: 1.6,
            k_heading: 2.0,
            k_omega: 1.1,
            max_tilt: 0.4,
            max_accel: 0.6,
            dodge_margin: 2.0,
        }
    }
}

/// A logged input stream for the replay pilot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySource {
    pub trajectory_id: String,
    pub controls: Vec<Control>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PilotSpec {
    pub kind: PilotKind,
    pub gains: PdGains,
    /// Standard deviation of the additive command noise, per axis.
    pub noise: f64,
    /// Correlation time of the noise (s); zero gives white noise.
    pub noise_tau: f64,
    /// Perception delay in physics steps.
    pub delay: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay: Option<ReplaySource>,
}

impl Default for PilotSpec {
    fn default() -> Self {
        Self {
            kind: PilotKind::ExpertPd,
            gains: PdGains::default(),
            noise: 0.0,
            noise_tau: 0.0,
            delay: 0,
            seed: 0,
            replay: None,
        }
    }
}

impl PilotSpec {
    pub fn expert(seed: u64) -> Self {
        Self { seed, ..Default::default() }
    }

    /// The novice used for the headless comparisons. A 350 ms reaction lag
    /// makes its attitude loop oscillate and occasionally diverge; the small
    /// noise spreads the outcomes across seeds.
    pub fn novice(seed: u64) -> Self {
        Self { kind: PilotKind::NoisyNovice, noise: 0.1, noise_tau: 0.5, delay: 21, seed, ..Default::default() }
    }

    pub fn adversarial(seed: u64) -> Self {
        Self { kind: PilotKind::Adversarial, seed, ..Default::default() }
    }

    pub fn replay(source: ReplaySource) -> Self {
        Self { kind: PilotKind::Replay, replay: Some(source), ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), PilotError> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(PilotError::InvalidParam(format!("noise must be >= 0, got {}", self.noise)));
        }
        if !(self.noise_tau >= 0.0 && self.noise_tau.is_finite()) {
            return Err(PilotError::InvalidParam(format!("noise_tau must be >= 0, got {}", self.noise_tau)));
        }
        if self.kind == PilotKind::Replay && self.replay.is_none() {
            return Err(PilotError::MissingReplay);
        }
        Ok(())
    }

    /// Short label recorded as the trajectory source.
    pub fn source_label(&self) -> String {
        self.kind.as_str().to_string()
    }
}

/// A pilot in flight.
#[derive(Debug, Clone)]
pub struct Pilot {
    spec: PilotSpec,
    rng: ChaCha8Rng,
    noise_state: [f64; 2],
    seen: VecDeque<LanderState>,
    step: usize,
}

impl Pilot {
    pub fn new(spec: PilotSpec) -> Result<Self, PilotError> {
        spec.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Ok(Self { spec, rng, noise_state: [0.0; 2], seen: VecDeque::new(), step: 0 })
    }

    pub fn spec(&self) -> &PilotSpec {
        &self.spec
    }

    /// Command for the current state at time `t`. Call once per physics step.
    pub fn act(&mut self, state: &LanderState, env: &Environment, physics: &PhysicsParams, t: f64) -> Control {
        let step = self.step;
        self.step += 1;
        match self.spec.kind {
            PilotKind::ExpertPd => expert_command(state, env, physics, &self.spec.gains),
            PilotKind::NoisyNovice => {
                self.seen.push_back(*state);
                while self.seen.len() > self.spec.delay + 1 {
                    self.seen.pop_front();
                }
                let perceived = self.seen[0];
                let u = expert_command(&perceived, env, physics, &self.spec.gains);
                if self.spec.noise == 0.0 {
                    return u;
                }
                let n = self.noise(physics.dt);
                Control::new(u.main + n[0], u.side + n[1]).clamped()
            }
            PilotKind::Adversarial => adversarial_command(state, env, physics, t, &self.spec.gains),
            PilotKind::Replay => self
                .spec
                .replay
                .as_ref()
                .and_then(|r| r.controls.get(step).copied())
                .unwrap_or(Control::ZERO),
        }
    }

    /// Gaussian noise, low-pass filtered so that its stationary standard
    /// deviation stays `noise` for any correlation time.
    fn noise(&mut self, dt: f64) -> [f64; 2] {
        let a = if self.spec.noise_tau > 0.0 { (-dt / self.spec.noise_tau).exp() } else { 0.0 };
        let b = (1.0 - a * a).sqrt();
        for n in self.noise_state.iter_mut() {
            let w: f64 = StandardNormal.sample(&mut self.rng);
            *n = a * *n + b * self.spec.noise * w;
        }
        self.noise_state
    }
}

/// Turn a desired acceleration into a command: tilt the thrust axis toward
/// the required force, then track that tilt with the side thruster.
fn track_acceleration(
    state: &LanderState,
    ax: f64,
    ay: f64,
    physics: &PhysicsParams,
    gains: &PdGains,
) -> Control {
    let fx = physics.mass * ax;
    let fy = physics.mass * (ay + physics.gravity);
    let desired_tilt = if fy > 0.0 { fx.atan2(fy).clamp(-gains.max_tilt, gains.max_tilt) } else { 0.0 };
    let (s, c) = state.heading.sin_cos();
    let main = ((fx * s + fy * c) / physics.main_thrust_max).max(0.0);
    let side = gains.k_heading * (desired_tilt - state.wrapped_heading()) - gains.k_omega * state.omega;
    Control::new(main, side).clamped()
}

/// Altitude the expert holds.
fn cruise_altitude(env: &Environment, physics: &PhysicsParams, gains: &PdGains) -> f64 {
    let r = physics.lander_radius;
    // Fly through the widest vertical gap of any static obstacle column ahead.
    let mut target = env.spawn.y;
    let mut gaps: Vec<(f64, f64, f64)> = Vec::new();
    for shape in &env.static_obstacles {
        if let crate::world::Shape::Rect { min, max } = shape {
            gaps.push((min[0], min[1], max[1]));
        }
    }
    if !gaps.is_empty() {
        gaps.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let column = gaps[0].0;
        let walls: Vec<_> = gaps.iter().filter(|g| g.0 == column).collect();
        let mut best: Option<(f64, f64)> = None;
        let mut lo = env.ground_height;
        for w in &walls {
            if w.1 - lo > best.map_or(0.0, |b| b.1 - b.0) {
                best = Some((lo, w.1));
            }
            lo = lo.max(w.2);
        }
        if env.bounds.y_max - lo > best.map_or(0.0, |b| b.1 - b.0) {
            best = Some((lo, env.bounds.y_max));
        }
        if let Some((a, b)) = best {
            target = 0.5 * (a + b);
        }
    }
    // Hold a lane above any crossing traffic for the whole trial.
    for d in &env.dynamic_obstacles {
        target = target.max(d.altitude + d.radius + r + gains.dodge_margin);
    }
    target
}

/// Waypoint-following PD toward the goal with altitude hold.
pub fn expert_command(
    state: &LanderState,
    env: &Environment,
    physics: &PhysicsParams,
    gains: &PdGains,
) -> Control {
    let y_ref = cruise_altitude(env, physics, gains);
    let vx_ref = if state.x < env.goal.x { gains.cruise_speed } else { 0.0 };
    let ax = (gains.k_vx * (vx_ref - state.vx)).clamp(-gains.max_accel, gains.max_accel);
    let ay = gains.k_y * (y_ref - state.y) - gains.k_vy * state.vy;
    track_acceleration(state, ax, ay, physics, gains)
}

/// Steers at the closest obstacle surface (the ground when nothing else is
/// nearer).
pub fn adversarial_command(
    state: &LanderState,
    env: &Environment,
    physics: &PhysicsParams,
    t: f64,
    gains: &PdGains,
) -> Control {
    let near = env.nearest_obstacle(state.position(), physics.lander_radius, t);
    let dx = near.surface_point[0] - state.x;
    let dy = near.surface_point[1] - state.y;
    let norm = dx.hypot(dy).max(1e-9);
    // Push toward the obstacle harder than gravity so a target straight below
    // leaves the main engine idle.
    let a = 2.0 * physics.gravity;
    track_acceleration(state, a * dx / norm, a * dy / norm, physics, gains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{make_environment, EnvId, Layout};

    fn env(id: EnvId) -> (Environment, PhysicsParams) {
        let p = PhysicsParams::default();
        (make_environment(id, &Layout::default(), &p, 3).unwrap(), p)
    }

    #[test]
    fn expert_hovering_at_setpoint_only_holds_weight() {
        let (e, p) = env(EnvId::Open);
        let gains = PdGains { cruise_speed: 0.0, ..Default::default() };
        let s = LanderState::at_rest(12.0, e.spawn.y);
        let u = expert_command(&s, &e, &p, &gains);
        assert!((u.main - p.gravity * p.mass / p.main_thrust_max).abs() < 1e-12);
        assert_eq!(u.side, 0.0);
    }

    #[test]
    fn expert_past_goal_stops_pushing_forward() {
        let (e, p) = env(EnvId::Open);
        let s = LanderState::new(e.goal.x, e.spawn.y, 0.0, 0.0, 0.0, 0.0);
        let u = expert_command(&s, &e, &p, &PdGains::default());
        assert!(u.side.abs() < 1e-12);
    }

    #[test]
    fn degenerate_novice_matches_expert() {
        let (e, p) = env(EnvId::NarrowPassage);
        let spec = PilotSpec { kind: PilotKind::NoisyNovice, noise: 0.0, delay: 0, ..Default::default() };
        let mut novice = Pilot::new(spec).unwrap();
        let mut expert = Pilot::new(PilotSpec::expert(0)).unwrap();
        let s = LanderState::new(7.0, 9.0, 0.1, 0.5, -0.2, 0.05);
        for k in 0..5 {
            let t = k as f64 * p.dt;
            assert!(novice.act(&s, &e, &p, t).bit_eq(&expert.act(&s, &e, &p, t)));
        }
    }

    #[test]
    fn adversary_in_open_world_dives_with_main_idle() {
        let (e, p) = env(EnvId::Open);
        let mut pilot = Pilot::new(PilotSpec::adversarial(1)).unwrap();
        let u = pilot.act(&LanderState::at_rest(10.0, 12.0), &e, &p, 0.0);
        assert_eq!(u.main, 0.0);
    }

    #[test]
    fn adversary_leans_toward_a_side_wall() {
        let (e, p) = env(EnvId::NarrowPassage);
        // Inside the gap, closest surface is the lower wall's top.
        let s = LanderState::at_rest(20.0, 9.0);
        let u = adversarial_command(&s, &e, &p, 0.0, &PdGains::default());
        assert_eq!(u.main, 0.0);
        // Left of the wall column at gap altitude, it tilts right (toward x0).
        let s = LanderState::at_rest(15.0, 5.0);
        let u = adversarial_command(&s, &e, &p, 0.0, &PdGains::default());
        assert!(u.side > 0.0);
    }

    #[test]
    fn novice_is_deterministic_per_seed() {
        let (e, p) = env(EnvId::Open);
        let run = |seed| {
            let mut pilot = Pilot::new(PilotSpec::novice(seed)).unwrap();
            (0..50).map(|k| pilot.act(&e.spawn, &e, &p, k as f64 * p.dt)).collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn replay_holds_zero_past_the_end() {
        let (e, p) = env(EnvId::Open);
        let source = ReplaySource { trajectory_id: "t".into(), controls: vec![Control::new(0.5, 0.1)] };
        let mut pilot = Pilot::new(PilotSpec::replay(source)).unwrap();
        assert_eq!(pilot.act(&e.spawn, &e, &p, 0.0), Control::new(0.5, 0.1));
        assert_eq!(pilot.act(&e.spawn, &e, &p, p.dt), Control::ZERO);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(PilotSpec { noise: -1.0, ..Default::default() }.validate().is_err());
        assert!(matches!(
            PilotSpec { kind: PilotKind::Replay, ..Default::default() }.validate(),
            Err(PilotError::MissingReplay)
        ));
        assert_eq!("noisy-novice".parse::<PilotKind>().unwrap(), PilotKind::NoisyNovice);
    }
}
