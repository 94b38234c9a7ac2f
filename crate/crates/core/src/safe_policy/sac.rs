use nalgebra::{SVector, Vector2};
use serde::{Deserialize, Serialize};

use super::cost::{cost_gradient, running_cost, terminal_cost, terminal_gradient, BarrierForm, SafetyCostParams};
use crate::koopman::KoopmanModel;
use crate::world::{Control, Environment, LanderState};

type Vec6 = SVector<f64, 6>;

/// Output of [`sac_action`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafeAction {
    pub control: Control,
    /// The model rollout was not finite and the PD hover fallback was used.
    pub fallback: bool,
    /// Application time (s from now) of the selected schedule entry.
    pub tau: Option<f64>,
    /// Cost of the nominal (zero-control) rollout.
    pub nominal_cost: f64,
    /// Cost with `control` held for one step, then nominal.
    pub action_cost: f64,
}

/// Number of discrete nodes in the prediction horizon.
pub fn horizon_steps(model: &KoopmanModel, params: &SafetyCostParams) -> usize {
    if model.dt > 0.0 {
        (params.horizon / model.dt).round() as usize
    } else {
        0
    }
}

/// Closest obstacle point at `(state, time)`; the ground always exists, so
/// every query has an answer.
pub fn obstacle_anchor(env: &Environment, state: &LanderState, t: f64) -> [f64; 2] {
    env.nearest_obstacle(state.position(), 0.0, t).surface_point
}

/// Running cost and its gradient at one rollout node. A predicted state
/// inside an obstacle (the ground included) sits on the barrier cap with a
/// flat barrier, so the repulsion never points deeper into the surface.
fn node_terms(x: &LanderState, env: &Environment, t: f64, params: &SafetyCostParams) -> (f64, [f64; 6]) {
    let near = env.nearest_obstacle(x.position(), 0.0, t);
    if near.signed_clearance < 0.0 && params.barrier_form == BarrierForm::Repulsive {
        return (running_cost(x, None, params) + params.barrier_cap, cost_gradient(x, None, params));
    }
    let anchor = Some(near.surface_point);
    (running_cost(x, anchor, params), cost_gradient(x, anchor, params))
}

/// Discrete approximation of the finite-horizon cost along the model rollout:
/// `sum_k l(x_k) dt + l_tf(x_N)` with `schedule[k]` applied at node `k` and
/// zero control after the schedule ends.
///
/// # Panics
/// If `schedule` is longer than the horizon.
pub fn predicted_cost(
    model: &KoopmanModel,
    state: &LanderState,
    schedule: &[Control],
    env: &Environment,
    t: f64,
    params: &SafetyCostParams,
) -> f64 {
    let n = horizon_steps(model, params);
    assert!(schedule.len() <= n, "schedule longer than horizon");
    let dt = model.dt;
    let mut x = *state;
    let mut total = 0.0;
    for k in 0..n {
        let tk = t + k as f64 * dt;
        total += node_terms(&x, env, tk, params).0 * dt;
        let u = schedule.get(k).copied().unwrap_or(Control::ZERO);
        x = model.predict_next(&x, &u);
    }
    total + terminal_cost(&x, params)
}

/// PD hover command used when the learned model produces a non-finite rollout.
pub fn fallback_control(state: &LanderState, params: &SafetyCostParams) -> Control {
    let [k1, k2, k3] = params.fallback_gains;
    let main = (-k1 * state.vy).clamp(0.0, 1.0);
    let side = (-k2 * state.heading - k3 * state.omega).clamp(-1.0, 1.0);
    let u = Control::new(main, side);
    if u.is_finite() {
        u
    } else {
        Control::ZERO
    }
}

/// Safety-only action for the current state (sequential action control).
///
/// A zero-control nominal is rolled out with the learned model, a discrete
/// costate is integrated backward through the model Jacobians, and at every
/// node the unconstrained minimizer `u* = -R^-1 B^T rho` is computed and
/// clamped to the control box. The node with the most negative first-order
/// cost change supplies the action. The action is applied now for one step, so
/// it is only returned if it actually lowers the predicted cost; otherwise the
/// current-node minimizer and shorter steps along both are tried before
/// settling on zero.
pub fn sac_action(
    model: &KoopmanModel,
    state: &LanderState,
    env: &Environment,
    t: f64,
    params: &SafetyCostParams,
) -> SafeAction {
    let n = horizon_steps(model, params);
    let dt = model.dt;
    let fallback = |nominal_cost: f64| SafeAction {
        control: fallback_control(state, params),
        fallback: true,
        tau: None,
        nominal_cost,
        action_cost: f64::NAN,
    };
    if n == 0 {
        let c = terminal_cost(state, params);
        return SafeAction { control: Control::ZERO, fallback: false, tau: None, nominal_cost: c, action_cost: c };
    }

    // Nominal rollout.
    let mut xs = Vec::with_capacity(n + 1);
    let mut grads = Vec::with_capacity(n);
    xs.push(*state);
    let mut nominal_cost = 0.0;
    for k in 0..n {
        let x = xs[k];
        let (cost, grad) = node_terms(&x, env, t + k as f64 * dt, params);
        nominal_cost += cost * dt;
        grads.push(grad);
        xs.push(model.predict_next(&x, &Control::ZERO));
    }
    nominal_cost += terminal_cost(&xs[n], params);
    if !nominal_cost.is_finite() || !xs.iter().all(LanderState::is_finite) {
        log::warn!("sac: non-finite model rollout, using fallback hover");
        return fallback(nominal_cost);
    }

    // Backward costate: rho_k = dt * dl/dx(x_k) + A_k^T rho_{k+1}.
    let r_inv = params.control_weight_inverse();
    let r_inv = nalgebra::Matrix2::new(r_inv[0][0], r_inv[0][1], r_inv[1][0], r_inv[1][1]);
    let mut rho = Vec6::from(terminal_gradient(&xs[n], params));
    let mut best: Option<(usize, f64, Control)> = None;
    let mut current_node = Control::ZERO;
    for k in (0..n).rev() {
        let (a, b) = model.linearize(&xs[k], &Control::ZERO);
        // Sensitivity of the cost to the control held over node k.
        let sens: Vector2<f64> = b.transpose() * rho;
        let u_star = -(r_inv * sens);
        let u = Control::new(u_star[0], u_star[1]).clamped();
        let change = sens[0] * u.main + sens[1] * u.side;
        if best.is_none_or(|(_, c, _)| change <= c) {
            best = Some((k, change, u));
        }
        if k == 0 {
            current_node = u;
        }
        let g = Vec6::from(grads[k]);
        rho = g * dt + a.transpose() * rho;
    }
    if !rho.iter().all(|v| v.is_finite()) {
        log::warn!("sac: non-finite costate, using fallback hover");
        return fallback(nominal_cost);
    }

    let idle = SafeAction { control: Control::ZERO, fallback: false, tau: None, nominal_cost, action_cost: nominal_cost };
    let Some((k_best, change, u_best)) = best else { return idle };
    if !(change < 0.0) {
        return idle;
    }
    let tau = k_best as f64 * dt;
    for (candidate, tau) in [(u_best, Some(tau)), (current_node, Some(0.0))] {
        for scale in [1.0, 0.5, 0.25, 0.125] {
            let u = candidate.scaled(scale);
            if u == Control::ZERO {
                continue;
            }
            let cost = predicted_cost(model, state, &[u], env, t, params);
            if cost < nominal_cost {
                return SafeAction { control: u, fallback: false, tau, nominal_cost, action_cost: cost };
            }
        }
    }
    idle
}
