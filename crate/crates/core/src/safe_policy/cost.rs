use serde::{Deserialize, Serialize};

use crate::world::LanderState;

/// Shape of the obstacle term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BarrierForm {
    /// `scale / (eps + |p - o|^2)^(p/2)`, saturated at `barrier_cap`.
    #[default]
    Repulsive,
    /// `scale * ((x1 - o1)^p + (x2 - o2)^p)`: the polynomial taken literally.
    /// It grows away from the obstacle and is only useful for comparison runs.
    Ascending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyCostParams {
    /// Weights on heading, horizontal velocity, vertical velocity and angular
    /// velocity; each enters the cost as `(w * x)^2`.
    pub stabilization_weights: [f64; 4],
    /// Barrier exponent, a positive even integer.
    pub barrier_exponent: u32,
    pub barrier_scale: f64,
    pub barrier_epsilon: f64,
    pub barrier_cap: f64,
    pub barrier_form: BarrierForm,
    /// Control effort weight `R` (symmetric positive definite).
    pub control_weight: [[f64; 2]; 2],
    /// Prediction horizon (s).
    pub horizon: f64,
    /// Weight of the terminal stabilization cost.
    pub terminal_weight: f64,
    /// Gains `(k1, k2, k3)` of the PD hover used when the model blows up.
    pub fallback_gains: [f64; 3],
}

impl Default for SafetyCostParams {
    fn default() -> Self {
        Self {
            stabilization_weights: [15.0, 1.0, 1.0, 10.0],
            barrier_exponent: 8,
            barrier_scale: 50.0,
            barrier_epsilon: 1e-3,
            barrier_cap: 1e6,
            barrier_form: BarrierForm::Repulsive,
            control_weight: [[0.05, 0.0], [0.0, 0.05]],
            horizon: 1.0,
            terminal_weight: 1.0,
            fallback_gains: [1.0, 2.0, 1.0],
        }
    }
}

impl SafetyCostParams {
    pub fn validate(&self) -> Result<(), String> {
        let p = self.barrier_exponent;
        if p == 0 || !p.is_multiple_of(2) {
            return Err(format!("barrier_exponent must be a positive even integer, got {p}"));
        }
        let [[a, b], [c, d]] = self.control_weight;
        if b != c || !(a > 0.0 && a * d - b * c > 0.0) {
            return Err("control_weight must be symmetric positive definite".into());
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(format!("horizon must be non-negative, got {}", self.horizon));
        }
        if !(self.barrier_scale >= 0.0 && self.barrier_epsilon > 0.0 && self.barrier_cap > 0.0) {
            return Err("barrier scale must be >= 0, epsilon and cap > 0".into());
        }
        Ok(())
    }

    /// `R^{-1}` of the 2x2 control weight.
    pub fn control_weight_inverse(&self) -> [[f64; 2]; 2] {
        let [[a, b], [c, d]] = self.control_weight;
        let det = a * d - b * c;
        [[d / det, -b / det], [-c / det, a / det]]
    }
}

/// Stabilization part of the running cost (heading and rate terms only).
pub fn stabilization_cost(state: &LanderState, params: &SafetyCostParams) -> f64 {
    let [w3, w4, w5, w6] = params.stabilization_weights;
    (w3 * state.heading).powi(2) + (w4 * state.vx).powi(2) + (w5 * state.vy).powi(2) + (w6 * state.omega).powi(2)
}

fn stabilization_gradient(state: &LanderState, params: &SafetyCostParams) -> [f64; 6] {
    let [w3, w4, w5, w6] = params.stabilization_weights;
    [
        0.0,
        0.0,
        2.0 * w3 * w3 * state.heading,
        2.0 * w4 * w4 * state.vx,
        2.0 * w5 * w5 * state.vy,
        2.0 * w6 * w6 * state.omega,
    ]
}

pub fn barrier_cost(state: &LanderState, obstacle: [f64; 2], params: &SafetyCostParams) -> f64 {
    let dx = state.x - obstacle[0];
    let dy = state.y - obstacle[1];
    let p = params.barrier_exponent as i32;
    match params.barrier_form {
        BarrierForm::Repulsive => {
            let base = params.barrier_epsilon + dx * dx + dy * dy;
            (params.barrier_scale / base.powi(p / 2)).min(params.barrier_cap)
        }
        BarrierForm::Ascending => params.barrier_scale * (dx.powi(p) + dy.powi(p)),
    }
}

fn barrier_gradient(state: &LanderState, obstacle: [f64; 2], params: &SafetyCostParams) -> [f64; 2] {
    let dx = state.x - obstacle[0];
    let dy = state.y - obstacle[1];
    let p = params.barrier_exponent as i32;
    match params.barrier_form {
        BarrierForm::Repulsive => {
            let base = params.barrier_epsilon + dx * dx + dy * dy;
            let value = params.barrier_scale / base.powi(p / 2);
            if value >= params.barrier_cap {
                return [0.0, 0.0];
            }
            // d/dx [s * base^(-p/2)] = -p * s * base^(-p/2 - 1) * dx
            let k = -(p as f64) * value / base;
            [k * dx, k * dy]
        }
        BarrierForm::Ascending => {
            let k = params.barrier_scale * p as f64;
            [k * dx.powi(p - 1), k * dy.powi(p - 1)]
        }
    }
}

/// Safety-only running cost: quadratic stabilization plus a barrier around
/// `obstacle` (the closest obstacle point), if any.
pub fn running_cost(state: &LanderState, obstacle: Option<[f64; 2]>, params: &SafetyCostParams) -> f64 {
    stabilization_cost(state, params) + obstacle.map_or(0.0, |o| barrier_cost(state, o, params))
}

/// Exact gradient of [`running_cost`] with respect to the six state components.
pub fn cost_gradient(state: &LanderState, obstacle: Option<[f64; 2]>, params: &SafetyCostParams) -> [f64; 6] {
    let mut g = stabilization_gradient(state, params);
    if let Some(o) = obstacle {
        let b = barrier_gradient(state, o, params);
        g[0] += b[0];
        g[1] += b[1];
    }
    g
}

pub fn terminal_cost(state: &LanderState, params: &SafetyCostParams) -> f64 {
    params.terminal_weight * stabilization_cost(state, params)
}

pub fn terminal_gradient(state: &LanderState, params: &SafetyCostParams) -> [f64; 6] {
    stabilization_gradient(state, params).map(|g| g * params.terminal_weight)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_at_origin_without_obstacle() {
        let p = SafetyCostParams::default();
        assert_eq!(running_cost(&LanderState::default(), None, &p), 0.0);
        assert_eq!(cost_gradient(&LanderState::default(), None, &p), [0.0; 6]);
    }

    #[test]
    fn heading_and_spin_terms_by_hand() {
        let p = SafetyCostParams::default();
        let tilt = LanderState::new(0.0, 0.0, 0.1, 0.0, 0.0, 0.0);
        assert!((running_cost(&tilt, None, &p) - 2.25).abs() < 1e-12);
        let spin = LanderState::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.5);
        assert!((running_cost(&spin, None, &p) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn far_obstacle_contributes_nothing_measurable() {
        let p = SafetyCostParams::default();
        let c = running_cost(&LanderState::default(), Some([1e6, 1e6]), &p);
        assert!(c < 1e-40);
    }

    #[test]
    fn barrier_saturates_at_obstacle_center() {
        let p = SafetyCostParams { barrier_cap: 10.0, ..Default::default() };
        let s = LanderState::at_rest(3.0, 4.0);
        assert_eq!(barrier_cost(&s, [3.0, 4.0], &p), 10.0);
        let g = cost_gradient(&s, Some([3.0, 4.0]), &p);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn descent_direction_points_away_from_obstacle() {
        let p = SafetyCostParams::default();
        for (x, o) in [(2.0, 1.0), (-0.5, 0.3), (4.0, 6.0)] {
            let s = LanderState::at_rest(x, 0.0);
            let g = cost_gradient(&s, Some([o, 0.5]), &p);
            assert_eq!((-g[0]).signum(), (x - o).signum());
        }
    }

    #[test]
    fn ascending_form_grows_with_distance() {
        let p = SafetyCostParams { barrier_form: BarrierForm::Ascending, barrier_scale: 1.0, ..Default::default() };
        let near = barrier_cost(&LanderState::at_rest(1.0, 0.0), [0.0, 0.0], &p);
        let far = barrier_cost(&LanderState::at_rest(2.0, 0.0), [0.0, 0.0], &p);
        assert_eq!(near, 1.0);
        assert_eq!(far, 256.0);
    }

    #[test]
    fn odd_exponent_is_rejected() {
        let p = SafetyCostParams { barrier_exponent: 7, ..Default::default() };
        assert!(p.validate().is_err());
        assert!(SafetyCostParams::default().validate().is_ok());
    }
}
