use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LanderState, PhysicsParams, WorldError};

/// The three experimental worlds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Open,
    DynamicObstacles,
    NarrowPassage,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::Open, EnvId::DynamicObstacles, EnvId::NarrowPassage];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::Open => "open",
            EnvId::DynamicObstacles => "dynamic_obstacles",
            EnvId::NarrowPassage => "narrow_passage",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "open" | "1" | "env1" => Ok(EnvId::Open),
            "dynamic_obstacles" | "dynamic" | "2" | "env2" => Ok(EnvId::DynamicObstacles),
            "narrow_passage" | "passage" | "3" | "env3" => Ok(EnvId::NarrowPassage),
            _ => Err(WorldError::UnknownEnv(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Circle { center: [f64; 2], radius: f64 },
    Rect { min: [f64; 2], max: [f64; 2] },
}

impl Shape {
    /// Signed distance from `p` to the shape surface (negative inside) and the
    /// surface point closest to `p`.
    pub fn signed_distance(&self, p: [f64; 2]) -> (f64, [f64; 2]) {
        match *self {
            Shape::Circle { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let r = dx.hypot(dy);
                let surface = if r > 0.0 {
                    [center[0] + radius * dx / r, center[1] + radius * dy / r]
                } else {
                    [center[0], center[1] + radius]
                };
                (r - radius, surface)
            }
            Shape::Rect { min, max } => {
                let cx = p[0].clamp(min[0], max[0]);
                let cy = p[1].clamp(min[1], max[1]);
                let inside = cx == p[0] && cy == p[1];
                if !inside {
                    let d = (p[0] - cx).hypot(p[1] - cy);
                    return (d, [cx, cy]);
                }
                // Inside: distance to the nearest face, ties resolved left, right, bottom, top.
                let faces = [
                    (p[0] - min[0], [min[0], p[1]]),
                    (max[0] - p[0], [max[0], p[1]]),
                    (p[1] - min[1], [p[0], min[1]]),
                    (max[1] - p[1], [p[0], max[1]]),
                ];
                let mut best = faces[0];
                for f in &faces[1..] {
                    if f.0 < best.0 {
                        best = *f;
                    }
                }
                (-best.0, best.1)
            }
        }
    }

    pub fn center(&self) -> [f64; 2] {
        match *self {
            Shape::Circle { center, .. } => center,
            Shape::Rect { min, max } => [(min[0] + max[0]) / 2.0, (min[1] + max[1]) / 2.0],
        }
    }
}

/// A circle moving horizontally at constant speed, present only during
/// `[t_enter, t_exit)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    pub radius: f64,
    pub altitude: f64,
    pub x_enter: f64,
    pub velocity: f64,
    pub t_enter: f64,
    pub t_exit: f64,
}

impl DynamicObstacle {
    pub fn is_active(&self, t: f64) -> bool {
        t >= self.t_enter && t < self.t_exit
    }

    pub fn center_at(&self, t: f64) -> [f64; 2] {
        [self.x_enter + self.velocity * (t - self.t_enter), self.altitude]
    }

    pub fn shape_at(&self, t: f64) -> Option<Shape> {
        self.is_active(t).then(|| Shape::Circle { center: self.center_at(t), radius: self.radius })
    }
}

/// Vertical goal segment; crossing it in the +x direction completes a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalLine {
    pub x: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl GoalLine {
    pub fn is_past(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x && p[1] >= self.y_min && p[1] <= self.y_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }
}

/// Geometry knobs for [`make_environment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Layout {
    pub width: f64,
    pub height: f64,
    pub ground_height: f64,
    pub spawn: [f64; 2],
    pub goal_x: f64,
    /// Horizontal extent of the two passage walls.
    pub passage_x: [f64; 2],
    /// Bottom and top of the free gap between the walls.
    pub passage_gap: [f64; 2],
    pub dynamic_radius: f64,
    pub dynamic_speed: f64,
    /// Time between consecutive obstacle entries; must exceed the crossing time.
    pub dynamic_period: f64,
    /// Seeded entry time of the first obstacle is drawn from `[0, dynamic_phase_span)`.
    pub dynamic_phase_span: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            width: 40.0,
            height: 30.0,
            ground_height: 0.0,
            spawn: [5.0, 10.0],
            goal_x: 35.0,
            passage_x: [18.0, 22.0],
            passage_gap: [7.0, 14.0],
            dynamic_radius: 1.5,
            dynamic_speed: 1.5,
            dynamic_period: 30.0,
            dynamic_phase_span: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub id: EnvId,
    pub static_obstacles: Vec<Shape>,
    pub dynamic_obstacles: Vec<DynamicObstacle>,
    pub ground_height: f64,
    pub goal: GoalLine,
    pub spawn: LanderState,
    pub bounds: Bounds,
}

/// Which surface a proximity query resolved to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Static(usize),
    Dynamic(usize),
    Ground,
}

/// Result of [`Environment::nearest_obstacle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    /// Signed clearance between the lander's bounding circle and the surface
    /// (negative when overlapping).
    pub signed_clearance: f64,
    /// Obstacle center; for the ground and for rectangles this is the closest
    /// surface point.
    pub center: [f64; 2],
    /// Closest point on the obstacle surface.
    pub surface_point: [f64; 2],
    pub kind: ObstacleKind,
}

impl Nearest {
    pub fn clearance(&self) -> f64 {
        self.signed_clearance.max(0.0)
    }
}

impl Environment {
    /// Obstacles present at time `t`, static first, in list order.
    pub fn obstacles_at(&self, t: f64) -> impl Iterator<Item = (ObstacleKind, Shape)> + '_ {
        let statics = self
            .static_obstacles
            .iter()
            .enumerate()
            .map(|(i, s)| (ObstacleKind::Static(i), *s));
        let dynamics = self
            .dynamic_obstacles
            .iter()
            .enumerate()
            .filter_map(move |(i, d)| d.shape_at(t).map(|s| (ObstacleKind::Dynamic(i), s)));
        statics.chain(dynamics)
    }

    /// Closest obstacle (ground included) to a lander of radius `radius`
    /// centered at `p`. Ties go to the earlier entry; the ground comes last.
    pub fn nearest_obstacle(&self, p: [f64; 2], radius: f64, t: f64) -> Nearest {
        let ground_point = [p[0], self.ground_height];
        let mut best = Nearest {
            signed_clearance: p[1] - (self.ground_height + radius),
            center: ground_point,
            surface_point: ground_point,
            kind: ObstacleKind::Ground,
        };
        let mut best_rank = usize::MAX;
        for (rank, (kind, shape)) in self.obstacles_at(t).enumerate() {
            let (d, surface) = shape.signed_distance(p);
            let clearance = d - radius;
            let better = clearance < best.signed_clearance
                || (clearance == best.signed_clearance && rank < best_rank);
            if better {
                let center = match shape {
                    Shape::Circle { center, .. } => center,
                    Shape::Rect { .. } => surface,
                };
                best = Nearest { signed_clearance: clearance, center, surface_point: surface, kind };
                best_rank = rank;
            }
        }
        best
    }

    /// Smallest signed clearance to any non-ground obstacle, if one exists.
    pub fn obstacle_clearance(&self, p: [f64; 2], radius: f64, t: f64) -> Option<f64> {
        self.obstacles_at(t)
            .map(|(_, s)| s.signed_distance(p).0 - radius)
            .reduce(f64::min)
    }

    pub fn ground_clearance(&self, p: [f64; 2], radius: f64) -> f64 {
        p[1] - (self.ground_height + radius)
    }

    pub fn validate(&self, params: &PhysicsParams) -> Result<(), WorldError> {
        let spawn = self.spawn.position();
        if !self.spawn.is_finite() {
            return Err(WorldError::InvalidEnvironment("spawn state is not finite".into()));
        }
        if self.ground_clearance(spawn, params.lander_radius) <= 0.0 {
            return Err(WorldError::InvalidEnvironment("spawn intersects the ground".into()));
        }
        if self.obstacle_clearance(spawn, params.lander_radius, 0.0).is_some_and(|c| c <= 0.0) {
            return Err(WorldError::InvalidEnvironment("spawn intersects an obstacle".into()));
        }
        let g = &self.goal;
        if !(self.bounds.contains([g.x, g.y_min]) && self.bounds.contains([g.x, g.y_max])) {
            return Err(WorldError::InvalidEnvironment("goal line outside world bounds".into()));
        }
        let mid = [g.x, (g.y_min.max(self.ground_height) + g.y_max) / 2.0];
        if self.obstacles_at(0.0).any(|(_, s)| s.signed_distance(mid).0 <= 0.0) {
            return Err(WorldError::InvalidEnvironment("goal line embedded in an obstacle".into()));
        }
        for w in self.dynamic_obstacles.windows(2) {
            if w[1].t_enter < w[0].t_exit {
                return Err(WorldError::InvalidEnvironment(
                    "dynamic obstacles overlap in time".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("environment serializes")
    }
}

/// Build one of the experimental worlds.
///
/// The seed only shifts the entry times of the dynamic obstacles; the static
/// geometry is identical for every seed.
pub fn make_environment(
    id: EnvId,
    layout: &Layout,
    params: &PhysicsParams,
    seed: u64,
) -> Result<Environment, WorldError> {
    let bounds = Bounds { x_min: 0.0, x_max: layout.width, y_min: layout.ground_height, y_max: layout.height };
    let goal = GoalLine { x: layout.goal_x, y_min: layout.ground_height, y_max: layout.height };
    let spawn = LanderState::at_rest(layout.spawn[0], layout.spawn[1]);
    let mut env = Environment {
        id,
        static_obstacles: Vec::new(),
        dynamic_obstacles: Vec::new(),
        ground_height: layout.ground_height,
        goal,
        spawn,
        bounds,
    };
    match id {
        EnvId::Open => {}
        EnvId::NarrowPassage => {
            let [x0, x1] = layout.passage_x;
            let [gap_lo, gap_hi] = layout.passage_gap;
            env.static_obstacles.push(Shape::Rect { min: [x0, layout.ground_height], max: [x1, gap_lo] });
            env.static_obstacles.push(Shape::Rect { min: [x0, gap_hi], max: [x1, layout.height] });
        }
        EnvId::DynamicObstacles => {
            let r = layout.dynamic_radius;
            let crossing = (layout.width + 2.0 * r) / layout.dynamic_speed;
            if layout.dynamic_period < crossing {
                return Err(WorldError::InvalidEnvironment(format!(
                    "dynamic_period {} shorter than crossing time {crossing}",
                    layout.dynamic_period
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phase = rng.random::<f64>() * layout.dynamic_phase_span;
            let horizon = params.trial_timeout + layout.dynamic_period;
            let mut t_enter = phase;
            while t_enter < horizon {
                env.dynamic_obstacles.push(DynamicObstacle {
                    radius: r,
                    altitude: layout.spawn[1],
                    x_enter: layout.width + r,
                    velocity: -layout.dynamic_speed,
                    t_enter,
                    t_exit: t_enter + crossing,
                });
                t_enter += layout.dynamic_period;
            }
        }
    }
    env.validate(params)?;
    Ok(env)
}
