//! Synthetic vision: projects world objects into a normalized image, splits
//! the image into left/front/right zones, classifies obstacles and devices,
//! and gates them by proximity.
//!
//! Detections produced by an external detector enter through the protocol
//! codec and are consumed exactly like the ones built here.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{bearing, distance, Pose2D, Vec2};
use crate::world::{cast_ray, line_of_sight, HitTarget, WorldModel};

/// Source id used for detections of the arena boundary.
pub const WALL_SOURCE: &str = "walls";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("object coincides with the camera position")]
    DegenerateProjection,
    #[error("distance must be non-negative, got {0}")]
    InvalidDistance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneConfig {
    /// Fraction of the image width taken by each of the left and right zones.
    pub side_margin: f64,
    /// Fraction of the image height considered, measured up from the bottom.
    pub height_fraction: f64,
}

impl Default for ZoneConfig {
    fn default() -> Self {
        Self {
            side_margin: 0.25,
            height_fraction: 0.75,
        }
    }
}

impl ZoneConfig {
    pub fn is_valid(&self) -> bool {
        self.side_margin > 0.0
            && self.side_margin < 0.5
            && self.height_fraction > 0.0
            && self.height_fraction <= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub horizontal_fov: f64,
    pub vertical_fov: f64,
    /// Height of the optical center above the ground, meters.
    pub mount_height: f64,
    /// Farthest distance at which objects are reported, meters.
    pub max_range: f64,
    /// Angular spacing of the visibility sweep, radians.
    pub sweep_step: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            horizontal_fov: 120f64.to_radians(),
            vertical_fov: 90f64.to_radians(),
            mount_height: 0.3,
            max_range: 8.0,
            sweep_step: 1f64.to_radians(),
        }
    }
}

impl CameraConfig {
    pub fn is_valid(&self) -> bool {
        let fov_ok = |f: f64| f > 0.0 && f < PI;
        fov_ok(self.horizontal_fov)
            && fov_ok(self.vertical_fov)
            && self.mount_height > 0.0
            && self.max_range > 0.0
            && self.sweep_step > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityConfig {
    pub obstacle_threshold: f64,
    pub device_serve_distance: f64,
}

impl Default for ProximityConfig {
    fn default() -> Self {
        Self {
            obstacle_threshold: 1.0,
            device_serve_distance: 2.0,
        }
    }
}

/// Image coordinates in [0, 1]; u grows to the right, v grows downward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    InView(ImagePoint),
    OutOfView,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Left,
    Front,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZoneClass {
    Zone(Zone),
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Obstacle,
    Device,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    pub kind: ObjectKind,
    pub zone: Zone,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub est_distance: Option<f64>,
    pub close: bool,
    pub source_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub detections: Vec<Detection>,
}

/// A detection together with the world point it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct Sighting {
    pub detection: Detection,
    pub point: Vec2,
}

/// Pinhole-style projection of a ground point.
///
/// The horizontal coordinate maps the relative bearing linearly across the
/// field of view; the vertical coordinate maps the depression angle below the
/// horizon, which sits at mid-height.
pub fn project_to_image(
    mrp: &Pose2D,
    object_point: Vec2,
    cam: &CameraConfig,
) -> Result<Projection, PerceptionError> {
    let rel = bearing(mrp, object_point).map_err(|_| PerceptionError::DegenerateProjection)?;
    let d = distance(mrp.position, object_point);
    if rel.abs() > cam.horizontal_fov / 2.0 {
        return Ok(Projection::OutOfView);
    }
    let u = 0.5 - rel / cam.horizontal_fov;
    let v = 0.5 + cam.mount_height.atan2(d) / cam.vertical_fov;
    if !(0.0..=1.0).contains(&v) {
        return Ok(Projection::OutOfView);
    }
    Ok(Projection::InView(ImagePoint {
        u: u.clamp(0.0, 1.0),
        v,
    }))
}

pub fn classify_zone(p: ImagePoint, zones: &ZoneConfig) -> ZoneClass {
    if p.v < 1.0 - zones.height_fraction {
        ZoneClass::Ignored
    } else if p.u < zones.side_margin {
        ZoneClass::Zone(Zone::Left)
    } else if p.u > 1.0 - zones.side_margin {
        ZoneClass::Zone(Zone::Right)
    } else {
        ZoneClass::Zone(Zone::Front)
    }
}

/// Whether an object at `est_distance` is close enough to act on. Inclusive.
pub fn proximity_gate(
    kind: ObjectKind,
    est_distance: f64,
    cfg: &ProximityConfig,
) -> Result<bool, PerceptionError> {
    if est_distance.is_nan() || est_distance < 0.0 {
        return Err(PerceptionError::InvalidDistance(est_distance));
    }
    Ok(match kind {
        ObjectKind::Obstacle => est_distance <= cfg.obstacle_threshold,
        ObjectKind::Device => est_distance <= cfg.device_serve_distance,
    })
}

/// Projects an object's base point. Objects are taller than the camera, so a
/// base below the bottom edge still shows up clipped to the bottom row.
fn project_object(mrp: &Pose2D, p: Vec2, cam: &CameraConfig) -> Option<ImagePoint> {
    match project_to_image(mrp, p, cam) {
        Ok(Projection::InView(ip)) => Some(ip),
        Ok(Projection::OutOfView) => {
            let rel = bearing(mrp, p).ok()?;
            (rel.abs() <= cam.horizontal_fov / 2.0).then(|| ImagePoint {
                u: (0.5 - rel / cam.horizontal_fov).clamp(0.0, 1.0),
                v: 1.0,
            })
        }
        Err(_) => None,
    }
}

/// A point on an obstacle is visible when the first thing a ray toward it
/// meets is the point itself.
fn unoccluded(world: &WorldModel, from: Vec2, p: Vec2, target: HitTarget) -> bool {
    let d = distance(from, p);
    if d < 1e-9 {
        return false;
    }
    match cast_ray(from, (p - from).angle(), d + 1e-6, world) {
        Ok(Some(hit)) => hit.target == target && hit.distance >= d - 1e-6,
        Ok(None) => true,
        Err(_) => false,
    }
}

/// Every object the camera currently sees, one entry per (object, zone) pair,
/// each at the nearest visible point of that object inside that zone.
pub fn observe(
    world: &WorldModel,
    cam: &CameraConfig,
    zones: &ZoneConfig,
    prox: &ProximityConfig,
) -> Vec<Sighting> {
    let mrp = world.mrp;
    let origin = mrp.position;

    // Candidate points per obstacle index; `n` stands for the arena walls.
    let n = world.obstacles.len();
    let mut candidates: Vec<Vec<Vec2>> = vec![Vec::new(); n + 1];

    for (i, o) in world.obstacles.iter().enumerate() {
        candidates[i].push(o.shape.nearest_point(origin));
    }
    if world.solid_walls {
        let b = &world.bounds;
        candidates[n].extend([
            Vec2::new(b.min.x, origin.y),
            Vec2::new(b.max.x, origin.y),
            Vec2::new(origin.x, b.min.y),
            Vec2::new(origin.x, b.max.y),
        ]);
    }
    let half = cam.horizontal_fov / 2.0;
    let rays = (cam.horizontal_fov / cam.sweep_step).ceil() as usize;
    for k in 0..=rays {
        let rel = -half + cam.horizontal_fov * k as f64 / rays as f64;
        if let Ok(Some(hit)) = cast_ray(origin, mrp.heading + rel, cam.max_range, world) {
            let p = origin + Vec2::from_angle(mrp.heading + rel) * hit.distance;
            match hit.target {
                HitTarget::Obstacle(i) => candidates[i].push(p),
                HitTarget::Wall => candidates[n].push(p),
            }
        }
    }

    let mut out = Vec::new();
    for (i, points) in candidates.iter().enumerate() {
        let (source_id, target) = if i < n {
            (world.obstacles[i].id.as_str(), HitTarget::Obstacle(i))
        } else {
            (WALL_SOURCE, HitTarget::Wall)
        };
        let mut best: [Option<(f64, Vec2)>; 3] = [None; 3];
        for &p in points {
            let d = distance(origin, p);
            if d > cam.max_range || !unoccluded(world, origin, p, target) {
                continue;
            }
            let Some(ip) = project_object(&mrp, p, cam) else {
                continue;
            };
            let ZoneClass::Zone(zone) = classify_zone(ip, zones) else {
                continue;
            };
            let slot = &mut best[zone as usize];
            if slot.is_none_or(|(bd, _)| d < bd) {
                *slot = Some((d, p));
            }
        }
        for (zone, slot) in [Zone::Left, Zone::Front, Zone::Right].into_iter().zip(best) {
            if let Some((d, p)) = slot {
                out.push(Sighting {
                    detection: Detection {
                        kind: ObjectKind::Obstacle,
                        zone,
                        est_distance: Some(d),
                        close: d <= prox.obstacle_threshold,
                        source_id: source_id.to_string(),
                    },
                    point: p,
                });
            }
        }
    }

    for dev in &world.devices {
        let p = dev.position;
        let d = distance(origin, p);
        if d < 1e-9 || d > cam.max_range || !line_of_sight(origin, p, world) {
            continue;
        }
        let Some(ip) = project_object(&mrp, p, cam) else {
            continue;
        };
        let ZoneClass::Zone(zone) = classify_zone(ip, zones) else {
            continue;
        };
        out.push(Sighting {
            detection: Detection {
                kind: ObjectKind::Device,
                zone,
                est_distance: Some(d),
                close: d <= prox.device_serve_distance,
                source_id: dev.id.clone(),
            },
            point: p,
        });
    }

    out.sort_by(|a, b| {
        (&a.detection.source_id, a.detection.zone).cmp(&(&b.detection.source_id, b.detection.zone))
    });
    out
}

pub fn build_report(
    world: &WorldModel,
    cam: &CameraConfig,
    zones: &ZoneConfig,
    prox: &ProximityConfig,
    seq: u64,
    timestamp_ms: u64,
) -> DetectionReport {
    DetectionReport {
        seq,
        timestamp_ms,
        detections: observe(world, cam, zones, prox)
            .into_iter()
            .map(|s| s.detection)
            .collect(),
    }
}

/// Owns the report sequence counter of one vision source.
#[derive(Debug, Clone, Default)]
pub struct VisionSource {
    next_seq: u64,
}

impl VisionSource {
    pub fn new() -> Self {
        Self { next_seq: 1 }
    }

    pub fn report(
        &mut self,
        world: &WorldModel,
        cam: &CameraConfig,
        zones: &ZoneConfig,
        prox: &ProximityConfig,
        timestamp_ms: u64,
    ) -> DetectionReport {
        let seq = self.next_seq.max(1);
        self.next_seq = seq + 1;
        build_report(world, cam, zones, prox, seq, timestamp_ms)
    }
}

/// True when the report holds a close obstacle in the front zone.
pub fn front_obstacle_close(report: &DetectionReport) -> bool {
    report
        .detections
        .iter()
        .any(|d| d.kind == ObjectKind::Obstacle && d.zone == Zone::Front && d.close)
}
