//! WebSocket wire protocol: JSON text frames tagged by `type`.
//!
//! Client to server: `join`, `control`, `reset`. Server to client: `hello`,
//! `state`, `outcome`, `error`. Unknown fields are ignored in both directions.

use sasc_core::filter::AllocationMode;
use sasc_core::sessions::{Paradigm, TrialMetrics, TrialSeeds};
use sasc_core::world::{EnvId, Environment};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    /// Start a trial. Missing fields fall back to the server defaults.
    Join {
        #[serde(default)]
        env: Option<String>,
        #[serde(default)]
        paradigm: Option<String>,
    },
    Control { seq: u64, u: [f64; 2] },
    /// Abandon the current trial (if any) and start a fresh one.
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    /// Sent at the start of every trial.
    Hello(Hello),
    State(StateFrame),
    Outcome(OutcomeFrame),
    Error { code: ErrorCode, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub session: u64,
    pub config_hash: String,
    pub trial: u64,
    pub trial_id: String,
    pub env: EnvId,
    pub paradigm: Paradigm,
    pub seeds: TrialSeeds,
    pub dt: f64,
    pub d_safe: f64,
    pub lander_radius: f64,
    pub geometry: Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    /// Monotone over the whole connection.
    pub seq: u64,
    /// Physics step within the trial.
    pub k: usize,
    pub t: f64,
    /// State after the step.
    pub x: [f64; 6],
    pub u_h: [f64; 2],
    pub u_a: Option<[f64; 2]>,
    pub applied: [f64; 2],
    pub mode: Option<AllocationMode>,
    pub distance: f64,
    pub status: String,
    /// Active dynamic obstacles after the step as `[x, y, radius]`.
    pub obstacles: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFrame {
    pub seq: u64,
    pub trial_id: String,
    pub status: String,
    pub metrics: TrialMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    NotJoined,
    UnknownEnv,
    UnknownParadigm,
    UnsupportedParadigm,
    MissingModel,
    BadControl,
    Internal,
}

impl ServerMsg {
    pub fn error(code: ErrorCode, msg: impl Into<String>) -> Self {
        ServerMsg::Error { code, msg: msg.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}
