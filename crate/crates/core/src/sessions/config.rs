use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SessionError;
use crate::filter::SafetyConfig;
use crate::imitation::TrainHyper;
use crate::koopman::SamplingBox;
use crate::pilots::PilotSpec;
use crate::safe_policy::SafetyCostParams;
use crate::world::{Layout, PhysicsParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KoopmanConfig {
    pub ridge: f64,
    /// Random simulator transitions used when no logs are supplied.
    pub samples: usize,
    pub sampling: SamplingBox,
}

impl Default for KoopmanConfig {
    fn default() -> Self {
        Self { ridge: 1e-6, samples: 10_000, sampling: SamplingBox::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    /// Steps a remote command is held without a fresh frame before it decays
    /// to zero.
    pub staleness_steps: usize,
    /// Wall-clock pacing multiplier for served trials (1 = real time).
    pub speed: f64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self { staleness_steps: 9, speed: 1.0 }
    }
}

/// The full parameter tree; every section has defaults so a partial TOML file
/// only overrides what it names.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LabConfig {
    pub physics: PhysicsParams,
    pub layout: Layout,
    pub cost: SafetyCostParams,
    pub safety: SafetyConfig,
    pub pilot: PilotSpec,
    pub koopman: KoopmanConfig,
    pub training: TrainHyper,
    pub live: LiveConfig,
}

impl LabConfig {
    pub fn from_toml(text: &str) -> Result<Self, SessionError> {
        let cfg: LabConfig = toml::from_str(text).map_err(|e| SessionError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path).map_err(|e| SessionError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, SessionError> {
        toml::to_string_pretty(self).map_err(|e| SessionError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        self.physics.validate().map_err(|e| SessionError::Config(e.to_string()))?;
        self.cost.validate().map_err(SessionError::Config)?;
        self.safety.validate().map_err(SessionError::Config)?;
        self.pilot.validate().map_err(|e| SessionError::Config(e.to_string()))?;
        if !(self.live.speed > 0.0) {
            return Err(SessionError::Config(format!("live.speed must be positive, got {}", self.live.speed)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
