//! Deterministic planar lander physics and the three experimental worlds.
//!
//! Everything here is a pure function over value types: [`step`] advances the
//! rigid body, [`classify_outcome`] decides whether a trial is over, and
//! [`distance_to_nearest_obstacle`] answers the proximity query used by the
//! safety layer. Dynamic obstacles are closed-form functions of time, so an
//! [`Environment`] never mutates while a trial runs.

mod environment;
mod outcome;
mod params;
mod physics;
mod state;

use thiserror::Error;

pub use environment::{
    make_environment, Bounds, DynamicObstacle, EnvId, Environment, GoalLine, Layout, Nearest,
    ObstacleKind, Shape,
};
pub use outcome::{classify_outcome, CrashReason, OutcomeLatch, TrialStatus};
pub use params::PhysicsParams;
pub use physics::{accelerations, is_legal_contact, step};
pub use state::{wrap_angle, Control, LanderState};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("state is not finite: {0:?}")]
    NonFiniteState(LanderState),
    #[error("negative simulation time {0}")]
    NegativeTime(f64),
    #[error("physics parameter `{name}` must be finite and positive, got {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
}

/// Clearance from the lander's bounding circle to the closest obstacle or
/// the ground (never negative) and that obstacle's center.
///
/// For the ground the "center" is the foot point below the lander; for
/// rectangles it is the closest point on the rectangle.
pub fn distance_to_nearest_obstacle(
    state: &LanderState,
    env: &Environment,
    params: &PhysicsParams,
    t: f64,
) -> (f64, [f64; 2]) {
    let n = env.nearest_obstacle(state.position(), params.lander_radius, t);
    (n.clearance(), n.center)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clearance_above_open_ground() {
        let p = PhysicsParams::default();
        let env = make_environment(EnvId::Open, &Layout::default(), &p, 0).unwrap();
        let s = LanderState::at_rest(12.0, 10.0);
        let (d, c) = distance_to_nearest_obstacle(&s, &env, &p, 0.0);
        assert_eq!(d, 10.0 - p.lander_radius);
        assert_eq!(c, [12.0, 0.0]);
    }

    #[test]
    fn touching_a_circle_is_zero_clearance() {
        let p = PhysicsParams::default();
        let mut env = make_environment(EnvId::Open, &Layout::default(), &p, 0).unwrap();
        env.static_obstacles.push(Shape::Circle { center: [10.0, 10.0], radius: 2.0 });
        let s = LanderState::at_rest(13.0, 10.0);
        let (d, c) = distance_to_nearest_obstacle(&s, &env, &p, 0.0);
        assert_eq!(d, 0.0);
        assert_eq!(c, [10.0, 10.0]);
    }

    #[test]
    fn equidistant_obstacles_resolve_to_lower_index() {
        let p = PhysicsParams::default();
        let mut env = make_environment(EnvId::Open, &Layout::default(), &p, 0).unwrap();
        env.static_obstacles.push(Shape::Circle { center: [6.0, 20.0], radius: 1.0 });
        env.static_obstacles.push(Shape::Circle { center: [14.0, 20.0], radius: 1.0 });
        let n = env.nearest_obstacle([10.0, 20.0], p.lander_radius, 0.0);
        assert_eq!(n.kind, ObstacleKind::Static(0));
        assert_eq!(n.center, [6.0, 20.0]);
    }

    #[test]
    fn dynamic_obstacles_are_evaluated_at_query_time() {
        let p = PhysicsParams::default();
        let env = make_environment(EnvId::DynamicObstacles, &Layout::default(), &p, 3).unwrap();
        let d0 = env.dynamic_obstacles[0];
        let t = d0.t_enter + 5.0;
        let c = d0.center_at(t);
        let s = LanderState::at_rest(c[0] - 4.0, c[1]);
        let n = env.nearest_obstacle(s.position(), p.lander_radius, t);
        assert_eq!(n.kind, ObstacleKind::Dynamic(0));
        assert!((n.signed_clearance - (4.0 - d0.radius - p.lander_radius)).abs() < 1e-12);
    }
}
