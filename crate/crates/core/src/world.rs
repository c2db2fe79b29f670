//! Static environment model and the geometric queries run against it:
//! ray casting, simulated ultrasonic ranging, unicycle integration,
//! body collision and line of sight.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance, wrap, Pose2D, Vec2};

/// Slack used when deciding whether a segment grazes an obstacle boundary.
const LOS_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("obstacle {id}: {reason}")]
    InvalidObstacle { id: String, reason: &'static str },
    #[error("device {0} lies inside an obstacle")]
    DeviceInsideObstacle(String),
    #[error("robot body is not collision-free at its initial pose")]
    MrpColliding,
    #[error("invalid arena bounds")]
    InvalidBounds,
    #[error("invalid robot radius {0}")]
    InvalidRadius(f64),
    #[error("ray origin is inside an obstacle or outside the arena")]
    OriginOccluded,
    #[error("max range must be positive, got {0}")]
    InvalidRange(f64),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("command (v={linear}, w={angular}) exceeds motion limits")]
    CommandOutOfRange { linear: f64, angular: f64 },
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite()
            && self.max.is_finite()
            && self.min.x < self.max.x
            && self.min.y < self.max.y
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    /// Closest point of the closed rectangle to `p`.
    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    fn shrunk(&self, by: f64) -> Aabb {
        Aabb {
            min: Vec2::new(self.min.x + by, self.min.y + by),
            max: Vec2::new(self.max.x - by, self.max.y - by),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Disc { center: Vec2, radius: f64 },
    Rect(Aabb),
}

impl Shape {
    /// Strict interior test.
    pub fn contains(&self, p: Vec2) -> bool {
        match *self {
            Shape::Disc { center, radius } => distance(center, p) < radius,
            Shape::Rect(r) => p.x > r.min.x && p.x < r.max.x && p.y > r.min.y && p.y < r.max.y,
        }
    }

    /// Euclidean distance from `p` to the shape (zero inside).
    pub fn distance_to(&self, p: Vec2) -> f64 {
        match *self {
            Shape::Disc { center, radius } => (distance(center, p) - radius).max(0.0),
            Shape::Rect(r) => distance(r.clamp(p), p),
        }
    }

    /// Point of the boundary nearest to `p`, for `p` outside the shape.
    pub fn nearest_point(&self, p: Vec2) -> Vec2 {
        match *self {
            Shape::Disc { center, radius } => {
                let d = p - center;
                let n = d.norm();
                if n < 1e-12 {
                    center + Vec2::new(radius, 0.0)
                } else {
                    center + d * (radius / n)
                }
            }
            Shape::Rect(r) => r.clamp(p),
        }
    }

    /// Entry distance of the ray `origin + t*dir` (unit `dir`), if any.
    /// Callers must make sure `origin` is not inside the shape.
    fn ray_entry(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match *self {
            Shape::Disc { center, radius } => {
                let m = origin - center;
                let b = m.dot(dir);
                let c = m.dot(m) - radius * radius;
                if c > 0.0 && b > 0.0 {
                    return None;
                }
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                Some((-b - disc.sqrt()).max(0.0))
            }
            Shape::Rect(r) => {
                let (t0, t1) = slab_interval(origin, dir, &r)?;
                if t1 < 0.0 {
                    None
                } else {
                    Some(t0.max(0.0))
                }
            }
        }
    }

    pub fn validate(&self, id: &str) -> Result<(), WorldError> {
        let bad = |reason| WorldError::InvalidObstacle {
            id: id.to_string(),
            reason,
        };
        match *self {
            Shape::Disc { center, radius } => {
                if !center.is_finite() {
                    return Err(bad("center is not finite"));
                }
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(bad("radius must be positive"));
                }
            }
            Shape::Rect(r) => {
                if !r.is_valid() {
                    return Err(bad("rect min must be strictly less than max"));
                }
            }
        }
        Ok(())
    }
}

/// Parameter interval over which a line `origin + t*dir` lies inside the closed box.
fn slab_interval(origin: Vec2, dir: Vec2, r: &Aabb) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for (o, d, lo, hi) in [
        (origin.x, dir.x, r.min.x, r.max.x),
        (origin.y, dir.y, r.min.y, r.max.y),
    ] {
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let (a, b) = ((lo - o) / d, (hi - o) / d);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: String,
    pub shape: Shape,
}

impl Obstacle {
    pub fn disc(id: impl Into<String>, center: Vec2, radius: f64) -> Self {
        Self {
            id: id.into(),
            shape: Shape::Disc { center, radius },
        }
    }

    pub fn rect(id: impl Into<String>, min: Vec2, max: Vec2) -> Self {
        Self {
            id: id.into(),
            shape: Shape::Rect(Aabb::new(min, max)),
        }
    }
}

/// A served wireless device, modelled as a point (a person carrying it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: String,
    pub position: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    /// m/s
    pub linear: f64,
    /// rad/s
    pub angular: f64,
}

impl VelocityCommand {
    pub const STOP: VelocityCommand = VelocityCommand {
        linear: 0.0,
        angular: 0.0,
    };

    pub fn new(linear: f64, angular: f64) -> Self {
        Self { linear, angular }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionLimits {
    pub max_linear: f64,
    pub max_angular: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            max_linear: 1.0,
            max_angular: 2.0,
        }
    }
}

impl MotionLimits {
    pub fn admits(&self, cmd: &VelocityCommand) -> bool {
        cmd.linear.is_finite()
            && cmd.angular.is_finite()
            && cmd.linear.abs() <= self.max_linear
            && cmd.angular.abs() <= self.max_angular
    }
}

/// Ultrasonic sensor geometry. The three beams are modelled as rays from the
/// body center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub max_range: f64,
    /// Offset of the left beam from the heading, radians (CCW).
    pub left_offset: f64,
    /// Offset of the right beam from the heading, radians (CW).
    pub right_offset: f64,
    /// Half-width of optional uniform range noise, meters. Zero disables it.
    pub noise: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            max_range: 4.0,
            left_offset: PI / 3.0,
            right_offset: PI / 3.0,
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UltrasonicReading {
    pub left: f64,
    pub front: f64,
    pub right: f64,
}

/// What a ray hit first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HitTarget {
    /// Index into [`WorldModel::obstacles`].
    Obstacle(usize),
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    pub target: HitTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub obstacles: Vec<Obstacle>,
    pub devices: Vec<Device>,
    pub bounds: Aabb,
    /// When set, the arena boundary blocks rays and motion.
    pub solid_walls: bool,
    pub mrp: Pose2D,
    pub mrp_radius: f64,
}

impl WorldModel {
    pub fn new(bounds: Aabb, mrp: Pose2D, mrp_radius: f64) -> Self {
        Self {
            obstacles: Vec::new(),
            devices: Vec::new(),
            bounds,
            solid_walls: true,
            mrp,
            mrp_radius,
        }
    }

    pub fn with_obstacle(mut self, obstacle: Obstacle) -> Self {
        self.obstacles.push(obstacle);
        self
    }

    pub fn with_device(mut self, id: impl Into<String>, position: Vec2) -> Self {
        self.devices.push(Device {
            id: id.into(),
            position,
        });
        self
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if !self.bounds.is_valid() {
            return Err(WorldError::InvalidBounds);
        }
        if !(self.mrp_radius > 0.0 && self.mrp_radius.is_finite()) {
            return Err(WorldError::InvalidRadius(self.mrp_radius));
        }
        for o in &self.obstacles {
            o.shape.validate(&o.id)?;
        }
        for d in &self.devices {
            if self.obstacles.iter().any(|o| o.shape.contains(d.position)) {
                return Err(WorldError::DeviceInsideObstacle(d.id.clone()));
            }
        }
        if !self.mrp.position.is_finite() || check_collision(self) {
            return Err(WorldError::MrpColliding);
        }
        Ok(())
    }

    pub fn obstacle_index(&self, id: &str) -> Option<usize> {
        self.obstacles.iter().position(|o| o.id == id)
    }

    /// Smallest distance from the body surface to any obstacle or solid wall.
    pub fn clearance(&self) -> f64 {
        clearance_at(self, self.mrp.position, self.mrp_radius)
    }
}

/// Casts a ray and reports what it hit first, within `max_range`.
pub fn cast_ray(
    origin: Vec2,
    direction: f64,
    max_range: f64,
    world: &WorldModel,
) -> Result<Option<RayHit>, WorldError> {
    if max_range.is_nan() || max_range <= 0.0 {
        return Err(WorldError::InvalidRange(max_range));
    }
    if world.obstacles.iter().any(|o| o.shape.contains(origin)) {
        return Err(WorldError::OriginOccluded);
    }
    let dir = Vec2::from_angle(direction);
    let mut best: Option<RayHit> = None;
    let mut consider = |t: f64, target: HitTarget| {
        if t <= max_range && best.is_none_or(|b| t < b.distance) {
            best = Some(RayHit {
                distance: t,
                target,
            });
        }
    };
    for (i, o) in world.obstacles.iter().enumerate() {
        if let Some(t) = o.shape.ray_entry(origin, dir) {
            consider(t, HitTarget::Obstacle(i));
        }
    }
    if world.solid_walls {
        let b = &world.bounds;
        if !b.contains(origin) {
            return Err(WorldError::OriginOccluded);
        }
        let mut exit = f64::INFINITY;
        if dir.x > 0.0 {
            exit = exit.min((b.max.x - origin.x) / dir.x);
        } else if dir.x < 0.0 {
            exit = exit.min((b.min.x - origin.x) / dir.x);
        }
        if dir.y > 0.0 {
            exit = exit.min((b.max.y - origin.y) / dir.y);
        } else if dir.y < 0.0 {
            exit = exit.min((b.min.y - origin.y) / dir.y);
        }
        consider(exit, HitTarget::Wall);
    }
    Ok(best)
}

/// Distance to the first obstacle or wall along the ray, `None` when nothing
/// lies within `max_range`.
pub fn ray_cast(
    origin: Vec2,
    direction: f64,
    max_range: f64,
    world: &WorldModel,
) -> Result<Option<f64>, WorldError> {
    Ok(cast_ray(origin, direction, max_range, world)?.map(|h| h.distance))
}

/// Noiseless left/front/right ranges from the robot center.
pub fn ultrasonic_read(
    world: &WorldModel,
    config: &SensorConfig,
) -> Result<UltrasonicReading, WorldError> {
    let origin = world.mrp.position;
    let h = world.mrp.heading;
    let range = |angle: f64| -> Result<f64, WorldError> {
        Ok(ray_cast(origin, angle, config.max_range, world)?.unwrap_or(config.max_range))
    };
    Ok(UltrasonicReading {
        left: range(h + config.left_offset)?,
        front: range(h)?,
        right: range(h - config.right_offset)?,
    })
}

/// [`ultrasonic_read`] plus uniform noise of half-width `config.noise`,
/// clamped back into `[0, max_range]`.
pub fn ultrasonic_read_noisy<R: Rng + ?Sized>(
    world: &WorldModel,
    config: &SensorConfig,
    rng: &mut R,
) -> Result<UltrasonicReading, WorldError> {
    let clean = ultrasonic_read(world, config)?;
    if config.noise <= 0.0 {
        return Ok(clean);
    }
    let mut jitter =
        |r: f64| (r + rng.random_range(-config.noise..=config.noise)).clamp(0.0, config.max_range);
    Ok(UltrasonicReading {
        left: jitter(clean.left),
        front: jitter(clean.front),
        right: jitter(clean.right),
    })
}

/// One unicycle step using the midpoint heading.
pub fn step_kinematics(
    pose: &Pose2D,
    cmd: &VelocityCommand,
    dt: f64,
    limits: &MotionLimits,
) -> Result<Pose2D, WorldError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(WorldError::InvalidTimeStep(dt));
    }
    if !limits.admits(cmd) {
        return Err(WorldError::CommandOutOfRange {
            linear: cmd.linear,
            angular: cmd.angular,
        });
    }
    if cmd.angular == 0.0 {
        let step = cmd.linear * dt;
        let (s, c) = pose.heading.sin_cos();
        return Ok(Pose2D {
            position: Vec2::new(pose.position.x + step * c, pose.position.y + step * s),
            heading: pose.heading,
        });
    }
    let turn = cmd.angular * dt;
    let mid = pose.heading + turn / 2.0;
    let step = cmd.linear * dt;
    let position = if step == 0.0 {
        pose.position
    } else {
        let (s, c) = mid.sin_cos();
        Vec2::new(pose.position.x + step * c, pose.position.y + step * s)
    };
    Ok(Pose2D {
        position,
        heading: wrap(pose.heading + turn),
    })
}

/// Clearance of a body circle at `center`; negative when overlapping.
pub fn clearance_at(world: &WorldModel, center: Vec2, radius: f64) -> f64 {
    let mut best = f64::INFINITY;
    for o in &world.obstacles {
        let d = match o.shape {
            Shape::Disc {
                center: c,
                radius: r,
            } => distance(c, center) - r,
            Shape::Rect(rect) => {
                if o.shape.contains(center) {
                    let dx = (center.x - rect.min.x).min(rect.max.x - center.x);
                    let dy = (center.y - rect.min.y).min(rect.max.y - center.y);
                    -dx.min(dy)
                } else {
                    o.shape.distance_to(center)
                }
            }
        };
        best = best.min(d - radius);
    }
    if world.solid_walls {
        let b = &world.bounds;
        let wall = (center.x - b.min.x)
            .min(b.max.x - center.x)
            .min(center.y - b.min.y)
            .min(b.max.y - center.y);
        best = best.min(wall - radius);
    }
    best
}

/// True when a body of `radius` at `center` overlaps an obstacle or leaves
/// the arena.
pub fn collides_at(world: &WorldModel, center: Vec2, radius: f64) -> bool {
    let hits_obstacle = world.obstacles.iter().any(|o| match o.shape {
        Shape::Disc {
            center: c,
            radius: r,
        } => distance(c, center) < r + radius,
        Shape::Rect(_) => o.shape.contains(center) || o.shape.distance_to(center) < radius,
    });
    let b = &world.bounds;
    let outside = center.x - radius < b.min.x
        || center.x + radius > b.max.x
        || center.y - radius < b.min.y
        || center.y + radius > b.max.y;
    hits_obstacle || outside
}

pub fn check_collision(world: &WorldModel) -> bool {
    collides_at(world, world.mrp.position, world.mrp_radius)
}

/// True iff the open segment `(a, b)` passes through no obstacle interior.
/// Arena walls do not block sight.
pub fn line_of_sight(a: Vec2, b: Vec2, world: &WorldModel) -> bool {
    world
        .obstacles
        .iter()
        .all(|o| !segment_blocked(a, b, &o.shape))
}

fn segment_blocked(a: Vec2, b: Vec2, shape: &Shape) -> bool {
    let ab = b - a;
    let len2 = ab.dot(ab);
    match *shape {
        Shape::Disc { center, radius } => {
            let t = if len2 == 0.0 {
                0.0
            } else {
                ((center - a).dot(ab) / len2).clamp(0.0, 1.0)
            };
            distance(a + ab * t, center) < radius - LOS_EPS
        }
        Shape::Rect(r) => {
            let inner = r.shrunk(LOS_EPS);
            if !inner.is_valid() {
                return false;
            }
            match slab_interval(a, ab, &inner) {
                Some((t0, t1)) => t0.max(0.0) <= t1.min(1.0),
                None => false,
            }
        }
    }
}
