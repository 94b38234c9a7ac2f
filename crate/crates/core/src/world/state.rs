use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Planar lander state: position, heading and their rates.
///
/// `heading` is 0 when upright. It is stored unwrapped; use
/// [`LanderState::wrapped_heading`] when an angular distance is needed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LanderState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl LanderState {
    pub const DIM: usize = 6;

    pub fn new(x: f64, y: f64, heading: f64, vx: f64, vy: f64, omega: f64) -> Self {
        Self { x, y, heading, vx, vy, omega }
    }

    pub fn at_rest(x: f64, y: f64) -> Self {
        Self { x, y, ..Self::default() }
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.heading, self.vx, self.vy, self.omega]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Heading folded into (-pi, pi].
    pub fn wrapped_heading(&self) -> f64 {
        wrap_angle(self.heading)
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Bitwise equality, used by replay verification.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.to_array()
            .iter()
            .zip(other.to_array().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Two-axis thruster command. `main` drives the main engine (force only when
/// positive), `side` drives the rotational thrusters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub main: f64,
    pub side: f64,
}

impl Control {
    pub const ZERO: Control = Control { main: 0.0, side: 0.0 };

    pub fn new(main: f64, side: f64) -> Self {
        Self { main, side }
    }

    pub fn from_array(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }

    pub fn to_array(&self) -> [f64; 2] {
        [self.main, self.side]
    }

    /// Both components clamped to [-1, 1]. NaN maps to 0.
    pub fn clamped(&self) -> Self {
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        Self::new(c(self.main), c(self.side))
    }

    pub fn dot(&self, other: &Control) -> f64 {
        self.main * other.main + self.side * other.side
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.main * k, self.side * k)
    }

    pub fn is_finite(&self) -> bool {
        self.main.is_finite() && self.side.is_finite()
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.main.to_bits() == other.main.to_bits() && self.side.to_bits() == other.side.to_bits()
    }
}
