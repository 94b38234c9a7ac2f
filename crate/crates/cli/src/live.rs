//! One operator connection: protocol handling and stepping, independent of
//! the transport so it can be driven by the server loop or by tests.

use std::sync::Arc;

use sasc_core::koopman::KoopmanModel;
use sasc_core::sessions::{InputHold, LabConfig, Paradigm, TrialSeeds, TrialSession, Trajectory};
use sasc_core::world::{Control, EnvId};

use crate::protocol::{ClientMsg, ErrorCode, Hello, OutcomeFrame, ServerMsg, StateFrame};

/// What a [`LiveSession::tick`] produced.
#[derive(Debug, Default)]
pub struct TickOutput {
    pub frames: Vec<ServerMsg>,
    /// The trial just ended; it should be logged.
    pub finished: Option<Trajectory>,
}

pub struct LiveSession {
    id: u64,
    base_seed: u64,
    config: Arc<LabConfig>,
    model: Option<Arc<KoopmanModel>>,
    env: EnvId,
    paradigm: Paradigm,
    trial: Option<TrialSession>,
    trials_started: u64,
    hold: InputHold,
    seq: u64,
    last_control_seq: Option<u64>,
}

impl LiveSession {
    pub fn new(
        id: u64,
        base_seed: u64,
        config: Arc<LabConfig>,
        model: Option<Arc<KoopmanModel>>,
        env: EnvId,
        paradigm: Paradigm,
    ) -> Self {
        Self {
            id,
            base_seed,
            config,
            model,
            env,
            paradigm,
            trial: None,
            trials_started: 0,
            hold: InputHold::default(),
            seq: 0,
            last_control_seq: None,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn is_running(&self) -> bool {
        self.trial.as_ref().is_some_and(|t| !t.status().is_terminal())
    }

    /// Seeds of trial `n` of this session; distinct across sessions.
    pub fn seeds_for(&self, n: u64) -> TrialSeeds {
        let s = self.base_seed.wrapping_add(self.id << 20).wrapping_add(n);
        TrialSeeds { env: s, source: s }
    }

    /// Handle one client text frame; returns the frames to send back.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMsg> {
        let msg = match serde_json::from_str::<ClientMsg>(text) {
            Ok(m) => m,
            Err(e) => return vec![ServerMsg::error(ErrorCode::BadMessage, e.to_string())],
        };
        match msg {
            ClientMsg::Join { env, paradigm } => {
                let env = match env.map(|e| e.parse::<EnvId>()).transpose() {
                    Ok(e) => e.unwrap_or(self.env),
                    Err(e) => return vec![ServerMsg::error(ErrorCode::UnknownEnv, e.to_string())],
                };
                let paradigm = match paradigm.map(|p| p.parse::<Paradigm>()).transpose() {
                    Ok(p) => p.unwrap_or(self.paradigm),
                    Err(e) => return vec![ServerMsg::error(ErrorCode::UnknownParadigm, e.to_string())],
                };
                if paradigm.uses_policy() {
                    return vec![ServerMsg::error(
                        ErrorCode::UnsupportedParadigm,
                        format!("paradigm `{paradigm}` is flown by a learned policy, not a live operator"),
                    )];
                }
                if paradigm.is_shared() && self.model.is_none() {
                    return vec![ServerMsg::error(
                        ErrorCode::MissingModel,
                        format!("paradigm `{paradigm}` needs a Koopman model; start the server with --model"),
                    )];
                }
                self.env = env;
                self.paradigm = paradigm;
                self.start_trial()
            }
            ClientMsg::Reset => self.start_trial(),
            ClientMsg::Control { seq, u } => {
                if self.trial.is_none() {
                    return vec![ServerMsg::error(ErrorCode::NotJoined, "send a join frame first")];
                }
                if !u.iter().all(|v| v.is_finite()) {
                    return vec![ServerMsg::error(ErrorCode::BadControl, "control values must be finite")];
                }
                // Frames that arrive out of order are superseded.
                if self.last_control_seq.is_some_and(|last| seq <= last) {
                    return Vec::new();
                }
                self.last_control_seq = Some(seq);
                self.hold.receive(Control::new(u[0], u[1]));
                Vec::new()
            }
        }
    }

    fn start_trial(&mut self) -> Vec<ServerMsg> {
        if self.is_running() {
            log::info!("session {}: trial abandoned by reset", self.id);
        }
        let n = self.trials_started;
        let seeds = self.seeds_for(n);
        let trial_id = format!("live-{}-{n}", self.id);
        let session = TrialSession::new(
            trial_id.clone(),
            self.env,
            self.paradigm,
            "human",
            seeds,
            &self.config,
            self.model.clone(),
        );
        match session {
            Ok(session) => {
                let hello = Hello {
                    session: self.id,
                    config_hash: session.header().config_hash.clone(),
                    trial: n,
                    trial_id,
                    env: self.env,
                    paradigm: self.paradigm,
                    seeds,
                    dt: self.config.physics.dt,
                    d_safe: self.config.safety.d_safe,
                    lander_radius: self.config.physics.lander_radius,
                    geometry: session.environment().clone(),
                };
                self.trials_started += 1;
                self.trial = Some(session);
                self.hold = InputHold::default();
                self.last_control_seq = None;
                vec![ServerMsg::Hello(hello)]
            }
            Err(e) => vec![ServerMsg::error(ErrorCode::Internal, e.to_string())],
        }
    }

    /// Advance the running trial by one physics step.
    pub fn tick(&mut self) -> TickOutput {
        let mut out = TickOutput::default();
        let bound = self.config.live.staleness_steps;
        let Some(trial) = self.trial.as_mut().filter(|t| !t.status().is_terminal()) else {
            return out;
        };
        let u = self.hold.next(bound);
        let record = match trial.advance(u) {
            Ok(Some(r)) => *r,
            Ok(None) => return out,
            Err(e) => {
                log::error!("session {}: {e}", self.id);
                out.frames.push(ServerMsg::error(ErrorCode::Internal, e.to_string()));
                self.trial = None;
                return out;
            }
        };
        let t = trial.time();
        let status = trial.status();
        let obstacles = trial
            .environment()
            .dynamic_obstacles
            .iter()
            .filter(|d| d.is_active(t))
            .map(|d| {
                let c = d.center_at(t);
                [c[0], c[1], d.radius]
            })
            .collect();
        self.seq += 1;
        out.frames.push(ServerMsg::State(StateFrame {
            seq: self.seq,
            k: record.k,
            t,
            x: trial.state().to_array(),
            u_h: record.u_source.to_array(),
            u_a: record.u_sa_a.map(|u| u.to_array()),
            applied: record.applied.to_array(),
            mode: record.mode,
            distance: record.distance,
            status: status.label().to_string(),
            obstacles,
        }));
        if status.is_terminal() {
            let trial = self.trial.take().expect("trial present");
            match trial.finish() {
                Ok(traj) => {
                    self.seq += 1;
                    out.frames.push(ServerMsg::Outcome(OutcomeFrame {
                        seq: self.seq,
                        trial_id: traj.header.trial_id.clone(),
                        status: traj.outcome.label().to_string(),
                        metrics: traj.metrics,
                    }));
                    out.finished = Some(traj);
                }
                Err(e) => out.frames.push(ServerMsg::error(ErrorCode::Internal, e.to_string())),
            }
        }
        out
    }

    /// The connection is gone; an unfinished trial is dropped unlogged.
    pub fn abandon(&mut self) {
        if self.is_running() {
            log::info!("session {}: trial abandoned on disconnect", self.id);
        }
        self.trial = None;
    }
}
