use serde::{Deserialize, Serialize};

use super::WorldError;

/// Rigid-body parameters of the lander and trial limits.
///
/// The defaults are engineering choices for a moon-like 60 Hz simulation, not
/// physical claims about any particular vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsParams {
    /// Integration step (s).
    pub dt: f64,
    /// Gravitational acceleration (m/s^2), acting along -y.
    pub gravity: f64,
    pub mass: f64,
    /// Rotational inertia about the center of mass (kg m^2).
    pub inertia: f64,
    /// Main engine force at full throttle (N), along the body-up axis.
    pub main_thrust_max: f64,
    /// Rotational thruster torque at full throttle (N m).
    pub side_torque_max: f64,
    /// Lateral force produced by the rotational thrusters at full throttle (N),
    /// along the body-right axis.
    pub side_force_max: f64,
    /// Radius of the bounding circle used for all contact tests (m).
    pub lander_radius: f64,
    /// Ground contact faster than this is a crash (m/s).
    pub max_impact_speed: f64,
    /// Ground contact tilted further than this is a crash (rad).
    pub max_landing_tilt: f64,
    /// Trials running longer than this time out (s).
    pub trial_timeout: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        let mass = 1.0;
        let gravity = 1.62;
        Self {
            dt: 1.0 / 60.0,
            gravity,
            mass,
            inertia: 0.1,
            main_thrust_max: 2.0 * mass * gravity,
            side_torque_max: 0.5,
            side_force_max: 0.1,
            lander_radius: 1.0,
            max_impact_speed: 2.0,
            max_landing_tilt: 0.4,
            trial_timeout: 60.0,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<(), WorldError> {
        let checks = [
            ("dt", self.dt),
            ("gravity", self.gravity),
            ("mass", self.mass),
            ("inertia", self.inertia),
            ("main_thrust_max", self.main_thrust_max),
            ("side_torque_max", self.side_torque_max),
            ("side_force_max", self.side_force_max),
            ("lander_radius", self.lander_radius),
            ("max_impact_speed", self.max_impact_speed),
            ("max_landing_tilt", self.max_landing_tilt),
            ("trial_timeout", self.trial_timeout),
        ];
        for (name, value) in checks {
            if !(value.is_finite() && value > 0.0) {
                return Err(WorldError::InvalidParam { name, value });
            }
        }
        Ok(())
    }

    /// Number of whole steps before a trial times out.
    pub fn timeout_steps(&self) -> usize {
        (self.trial_timeout / self.dt).round() as usize
    }
}
