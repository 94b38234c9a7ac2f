use super::{Control, Environment, LanderState, PhysicsParams, WorldError};

/// Per-axis accelerations produced by a (clamped) command at `heading`.
///
/// The main engine pushes along the body-up axis `(sin h, cos h)`, the
/// rotational thrusters add a torque and a small force along the body-right
/// axis `(cos h, -sin h)`.
pub fn accelerations(heading: f64, control: Control, params: &PhysicsParams) -> [f64; 3] {
    let u = control.clamped();
    let main = params.main_thrust_max * u.main.max(0.0);
    let lateral = params.side_force_max * u.side;
    let (s, c) = heading.sin_cos();
    let ax = (main * s + lateral * c) / params.mass;
    let ay = (main * c - lateral * s) / params.mass - params.gravity;
    let alpha = params.side_torque_max * u.side / params.inertia;
    [ax, ay, alpha]
}

/// Advance the lander by one semi-implicit Euler step of `params.dt`.
///
/// Velocities update first, then positions use the new velocities. Ground
/// penetration is resolved (lander placed on the surface, downward velocity
/// removed) only when the contact is a legal landing; a hard or tilted impact
/// is left penetrating so that [`classify_outcome`](super::classify_outcome)
/// reports it. Obstacles are functions of time and are not integrated here.
pub fn step(
    state: &LanderState,
    control: Control,
    env: &Environment,
    params: &PhysicsParams,
    t: f64,
) -> Result<LanderState, WorldError> {
    if !state.is_finite() {
        return Err(WorldError::NonFiniteState(*state));
    }
    if !(t >= 0.0) {
        return Err(WorldError::NegativeTime(t));
    }
    let dt = params.dt;
    let [ax, ay, alpha] = accelerations(state.heading, control, params);

    let vx = state.vx + ax * dt;
    let vy = state.vy + ay * dt;
    let omega = state.omega + alpha * dt;
    let mut next = LanderState {
        x: state.x + vx * dt,
        y: state.y + vy * dt,
        heading: state.heading + omega * dt,
        vx,
        vy,
        omega,
    };

    let rest_height = env.ground_height + params.lander_radius;
    if next.y <= rest_height && is_legal_contact(&next, params) {
        next.y = rest_height;
        next.vy = next.vy.max(0.0);
    }
    Ok(next)
}

/// Contact slow and upright enough to count as touching down rather than crashing.
pub fn is_legal_contact(state: &LanderState, params: &PhysicsParams) -> bool {
    state.speed() <= params.max_impact_speed && state.wrapped_heading().abs() <= params.max_landing_tilt
}
