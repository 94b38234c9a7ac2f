use std::sync::Arc;

use super::config::LabConfig;
use super::trajectory::{Paradigm, StepRecord, TrialSeeds, Trajectory, TrajectoryHeader, SCHEMA_VERSION};
use super::SessionError;
use crate::filter::{is_unsafe, SharedController, UnsafeMonitor};
use crate::imitation::PolicyNet;
use crate::koopman::KoopmanModel;
use crate::pilots::Pilot;
use crate::world::{self, make_environment, Control, EnvId, Environment, LanderState, OutcomeLatch, TrialStatus};

/// Anything that produces the source command each step.
pub trait CommandSource {
    fn command(&mut self, state: &LanderState, env: &Environment, t: f64, config: &LabConfig) -> Control;
}

impl CommandSource for Pilot {
    fn command(&mut self, state: &LanderState, env: &Environment, t: f64, config: &LabConfig) -> Control {
        self.act(state, env, &config.physics, t)
    }
}

impl CommandSource for PolicyNet {
    fn command(&mut self, state: &LanderState, _env: &Environment, _t: f64, _config: &LabConfig) -> Control {
        self.act(state)
    }
}

impl CommandSource for &PolicyNet {
    fn command(&mut self, state: &LanderState, _env: &Environment, _t: f64, _config: &LabConfig) -> Control {
        self.act(state)
    }
}

/// A trial being stepped one command at a time. Headless runs drive it from
/// [`run_trial`]; the live server feeds it remote commands.
#[derive(Debug)]
pub struct TrialSession {
    header: TrajectoryHeader,
    config: LabConfig,
    env: Environment,
    model: Option<Arc<KoopmanModel>>,
    state: LanderState,
    k: usize,
    latch: OutcomeLatch,
    monitor: UnsafeMonitor,
    steps: Vec<StepRecord>,
}

impl TrialSession {
    /// Build the world and check that a shared paradigm has its model.
    pub fn new(
        trial_id: impl Into<String>,
        env_id: EnvId,
        paradigm: Paradigm,
        source: impl Into<String>,
        seeds: TrialSeeds,
        config: &LabConfig,
        model: Option<Arc<KoopmanModel>>,
    ) -> Result<Self, SessionError> {
        if paradigm.is_shared() && model.is_none() {
            return Err(SessionError::MissingModel(paradigm));
        }
        if let Some(m) = &model {
            if (m.dt - config.physics.dt).abs() > 1e-12 {
                return Err(SessionError::Config(format!(
                    "model dt {} does not match physics dt {}",
                    m.dt, config.physics.dt
                )));
            }
        }
        let env = make_environment(env_id, &config.layout, &config.physics, seeds.env)?;
        let header = TrajectoryHeader {
            trial_id: trial_id.into(),
            env_id,
            seeds,
            paradigm,
            source: source.into(),
            config_hash: config.hash(),
            physics: config.physics.clone(),
            layout: config.layout.clone(),
        };
        let state = env.spawn;
        let mut session = Self {
            header,
            config: config.clone(),
            env,
            model,
            state,
            k: 0,
            latch: OutcomeLatch::default(),
            monitor: UnsafeMonitor::default(),
            steps: Vec::new(),
        };
        session.latch.update(&session.state, &session.env, &session.config.physics, 0.0);
        Ok(session)
    }

    pub fn header(&self) -> &TrajectoryHeader {
        &self.header
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn config(&self) -> &LabConfig {
        &self.config
    }

    pub fn state(&self) -> &LanderState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.config.physics.dt
    }

    pub fn status(&self) -> TrialStatus {
        self.latch.status()
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    /// Allocate, apply and integrate one step. Does nothing once the trial is
    /// over.
    pub fn advance(&mut self, u_source: Control) -> Result<Option<&StepRecord>, SessionError> {
        if self.status().is_terminal() {
            return Ok(None);
        }
        let t = self.time();
        let physics = &self.config.physics;
        let record = match (&self.model, self.header.paradigm.is_shared()) {
            (Some(model), true) => {
                let controller = SharedController {
                    model,
                    cost: &self.config.cost,
                    safety: &self.config.safety,
                    physics,
                };
                let out = controller.step_with_monitor(&mut self.monitor, &self.state, &self.env, t, u_source);
                StepRecord {
                    k: self.k,
                    t,
                    state: self.state,
                    u_source: out.u_source,
                    u_sa_a: Some(out.autonomy.control),
                    applied: out.decision.applied,
                    mode: Some(out.decision.mode),
                    distance: out.decision.distance,
                    unsafe_flag: out.decision.unsafe_flag,
                    fallback: out.autonomy.fallback,
                }
            }
            _ => {
                let (flag, distance) = is_unsafe(&self.state, &self.env, physics, t, &self.config.safety);
                let u = u_source.clamped();
                StepRecord {
                    k: self.k,
                    t,
                    state: self.state,
                    u_source: u,
                    u_sa_a: None,
                    applied: u,
                    mode: None,
                    distance,
                    unsafe_flag: flag,
                    fallback: false,
                }
            }
        };
        self.state = world::step(&self.state, record.applied, &self.env, physics, t)?;
        self.steps.push(record);
        self.k += 1;
        let t_next = self.time();
        self.latch.update(&self.state, &self.env, &self.config.physics, t_next);
        Ok(self.steps.last())
    }

    /// Close the trial. Fails if it is still running.
    pub fn finish(self) -> Result<Trajectory, SessionError> {
        let outcome = self.status();
        if !outcome.is_terminal() {
            return Err(SessionError::NotFinished);
        }
        let metrics = Trajectory::derive_metrics(&self.steps, &self.state, self.config.physics.dt);
        Ok(Trajectory {
            schema: SCHEMA_VERSION,
            header: self.header,
            steps: self.steps,
            final_state: self.state,
            outcome,
            metrics,
        })
    }
}

/// Fly one complete trial headless.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    trial_id: impl Into<String>,
    env_id: EnvId,
    paradigm: Paradigm,
    source_label: impl Into<String>,
    source: &mut dyn CommandSource,
    seeds: TrialSeeds,
    config: &LabConfig,
    model: Option<Arc<KoopmanModel>>,
) -> Result<Trajectory, SessionError> {
    let mut session = TrialSession::new(trial_id, env_id, paradigm, source_label, seeds, config, model)?;
    while !session.status().is_terminal() {
        let u = source.command(&session.state, &session.env, session.time(), &session.config);
        session.advance(u)?;
    }
    session.finish()
}

/// Result of re-simulating a logged trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub steps: usize,
    /// First step whose recorded state differs from the re-simulation.
    pub first_mismatch: Option<usize>,
    pub final_state_matches: bool,
    pub outcome: TrialStatus,
    pub outcome_matches: bool,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.first_mismatch.is_none() && self.final_state_matches && self.outcome_matches
    }
}

/// Re-simulate from the header's seeds and parameters with the logged
/// applied controls and compare every state bit for bit.
pub fn replay_trajectory(trajectory: &Trajectory) -> Result<ReplayReport, SessionError> {
    let h = &trajectory.header;
    let env = make_environment(h.env_id, &h.layout, &h.physics, h.seeds.env)?;
    let mut state = env.spawn;
    let mut latch = OutcomeLatch::default();
    let mut first_mismatch = None;
    for (k, rec) in trajectory.steps.iter().enumerate() {
        if first_mismatch.is_none() && !state.bit_eq(&rec.state) {
            first_mismatch = Some(k);
        }
        let t = k as f64 * h.physics.dt;
        latch.update(&state, &env, &h.physics, t);
        state = world::step(&state, rec.applied, &env, &h.physics, t)?;
    }
    let outcome = latch.update(&state, &env, &h.physics, trajectory.steps.len() as f64 * h.physics.dt);
    Ok(ReplayReport {
        steps: trajectory.steps.len(),
        first_mismatch,
        final_state_matches: state.bit_eq(&trajectory.final_state),
        outcome,
        outcome_matches: outcome == trajectory.outcome,
    })
}

/// Remote-command holder: the last command stays in force for `bound` steps
/// without a fresh frame, then decays to zero.
#[derive(Debug, Clone, Default)]
pub struct InputHold {
    last: Control,
    age: usize,
}

impl InputHold {
    pub fn receive(&mut self, u: Control) {
        self.last = u.clamped();
        self.age = 0;
    }

    /// Command for the next physics step.
    pub fn next(&mut self, bound: usize) -> Control {
        let u = if self.age < bound { self.last } else { Control::ZERO };
        self.age = self.age.saturating_add(1);
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_holds_then_decays() {
        let mut hold = InputHold::default();
        hold.receive(Control::new(0.8, -0.2));
        let seen: Vec<Control> = (0..11).map(|_| hold.next(9)).collect();
        assert!(seen[..9].iter().all(|u| *u == Control::new(0.8, -0.2)));
        assert_eq!(seen[9], Control::ZERO);
        hold.receive(Control::new(0.1, 0.1));
        assert_eq!(hold.next(9), Control::new(0.1, 0.1));
    }

    #[test]
    fn shared_paradigm_without_model_is_refused() {
        let cfg = LabConfig::default();
        let err = TrialSession::new("t", EnvId::Open, Paradigm::Shared, "x", TrialSeeds::default(), &cfg, None);
        assert!(matches!(err, Err(SessionError::MissingModel(Paradigm::Shared))));
    }

    #[test]
    fn idle_lander_falls_and_crashes_with_full_record() {
        let cfg = LabConfig::default();
        let mut idle = crate::pilots::Pilot::new(crate::pilots::PilotSpec::replay(crate::pilots::ReplaySource {
            trajectory_id: "none".into(),
            controls: vec![],
        }))
        .unwrap();
        let traj =
            run_trial("t0", EnvId::Open, Paradigm::UserOnly, "replay", &mut idle, TrialSeeds::default(), &cfg, None)
                .unwrap();
        assert!(traj.outcome.is_crash());
        for (k, s) in traj.steps.iter().enumerate() {
            assert_eq!(s.k, k);
            assert_eq!(s.t, k as f64 * cfg.physics.dt);
            assert!(s.mode.is_none());
        }
        assert!(replay_trajectory(&traj).unwrap().is_exact());
    }
}
