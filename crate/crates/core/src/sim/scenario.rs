//! Line-oriented scenario files.
//!
//! ```text
//! label fig11c
//! bounds -1.5 -1.5 6.5 6.5
//! mrp 0 0 0 0.15
//! rect 2 2 3 3
//! disc 4 1 0.3 pillar
//! device ap 6 1
//! target 5 5
//! set control.default_speed 0.3
//! seed 7
//! ```
//!
//! Angles accept a `deg` suffix (`90deg`); plain numbers are radians.

use std::path::Path;

use thiserror::Error;

use super::{Scenario, SimConfig};
use crate::geometry::{Pose2D, Vec2};
use crate::world::{Aabb, Device, Obstacle, WorldModel};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        message: message.into(),
    }
}

fn number(tok: &str, line: usize, what: &str) -> Result<f64, ScenarioError> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("{what}: expected a number, got {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what}: value must be finite")));
    }
    Ok(v)
}

fn angle(tok: &str, line: usize, what: &str) -> Result<f64, ScenarioError> {
    match tok.strip_suffix("deg") {
        Some(deg) => Ok(number(deg, line, what)?.to_radians()),
        None => number(tok, line, what),
    }
}

fn boolean(tok: &str, line: usize, what: &str) -> Result<bool, ScenarioError> {
    match tok {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(parse_err(
            line,
            format!("{what}: expected true or false, got {tok:?}"),
        )),
    }
}

fn count(tok: &str, line: usize, what: &str) -> Result<u32, ScenarioError> {
    tok.parse().map_err(|_| {
        parse_err(
            line,
            format!("{what}: expected a non-negative integer, got {tok:?}"),
        )
    })
}

fn expect_args<'a>(
    args: &'a [&'a str],
    n: usize,
    line: usize,
    usage: &str,
) -> Result<&'a [&'a str], ScenarioError> {
    if args.len() != n {
        return Err(parse_err(line, format!("expected `{usage}`")));
    }
    Ok(args)
}

/// Applies one `set key value` line.
pub(crate) fn apply_setting(
    scn: &mut Scenario,
    key: &str,
    value: &str,
    line: usize,
) -> Result<(), ScenarioError> {
    let c = &mut scn.control;
    let f = |what| number(value, line, what);
    let a = |what| angle(value, line, what);
    match key {
        "control.default_speed" => c.default_speed = f(key)?,
        "control.forward_interval" => c.forward_interval = f(key)?,
        "control.avoid_angle" => c.avoid_angle = a(key)?,
        "control.rotation_speed" => c.rotation_speed = f(key)?,
        "control.arrival_tolerance" => c.arrival_tolerance = f(key)?,
        "control.heading_tolerance" => c.heading_tolerance = a(key)?,
        "control.max_avoid_iterations" => c.max_avoid_iterations = count(value, line, key)?,
        "control.max_send_to_recursions" => c.max_send_to_recursions = count(value, line, key)?,
        "control.front_stop_distance" => c.front_stop_distance = f(key)?,
        "control.report_settle" => c.report_settle = f(key)?,
        "zones.side_margin" => scn.zones.side_margin = f(key)?,
        "zones.height_fraction" => scn.zones.height_fraction = f(key)?,
        "proximity.obstacle_threshold" => scn.proximity.obstacle_threshold = f(key)?,
        "proximity.device_serve_distance" => scn.proximity.device_serve_distance = f(key)?,
        "camera.horizontal_fov" => scn.camera.horizontal_fov = a(key)?,
        "camera.vertical_fov" => scn.camera.vertical_fov = a(key)?,
        "camera.mount_height" => scn.camera.mount_height = f(key)?,
        "camera.max_range" => scn.camera.max_range = f(key)?,
        "camera.sweep_step" => scn.camera.sweep_step = a(key)?,
        "sensor.max_range" => scn.sensor.max_range = f(key)?,
        "sensor.left_offset" => scn.sensor.left_offset = a(key)?,
        "sensor.right_offset" => scn.sensor.right_offset = a(key)?,
        "sensor.noise" => scn.sensor.noise = f(key)?,
        "limits.max_linear" => scn.limits.max_linear = f(key)?,
        "limits.max_angular" => scn.limits.max_angular = f(key)?,
        "sim.dt" => scn.sim.dt = f(key)?,
        "sim.vision_period" => scn.sim.vision_period = f(key)?,
        "sim.report_loss" => scn.sim.report_loss = f(key)?,
        "sim.max_time" => scn.sim.max_time = f(key)?,
        "sim.vision" => scn.sim.vision = boolean(value, line, key)?,
        "world.solid_walls" => scn.world.solid_walls = boolean(value, line, key)?,
        _ => return Err(parse_err(line, format!("unknown setting {key:?}"))),
    }
    Ok(())
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut scn = Scenario::new(WorldModel::new(
        Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.0)),
        Pose2D::default(),
        0.15,
    ));
    let mut have_bounds = false;
    let mut auto_id = 0usize;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        let (head, args) = (toks[0], &toks[1..]);
        match head {
            "label" => {
                if args.is_empty() {
                    return Err(parse_err(line, "expected `label TEXT`"));
                }
                scn.label = args.join(" ");
            }
            "seed" => {
                let a = expect_args(args, 1, line, "seed N")?;
                scn.seed = a[0]
                    .parse()
                    .map_err(|_| parse_err(line, format!("seed: bad integer {:?}", a[0])))?;
            }
            "bounds" => {
                let a = expect_args(args, 4, line, "bounds X0 Y0 X1 Y1")?;
                let min = Vec2::new(number(a[0], line, "x0")?, number(a[1], line, "y0")?);
                let max = Vec2::new(number(a[2], line, "x1")?, number(a[3], line, "y1")?);
                scn.world.bounds = Aabb::new(min, max);
                have_bounds = true;
            }
            "mrp" => {
                let a = expect_args(args, 4, line, "mrp X Y THETA RADIUS")?;
                scn.world.mrp = Pose2D::new(
                    number(a[0], line, "x")?,
                    number(a[1], line, "y")?,
                    angle(a[2], line, "theta")?,
                );
                scn.world.mrp_radius = number(a[3], line, "radius")?;
            }
            "disc" | "rect" => {
                let n = if head == "disc" { 3 } else { 4 };
                if args.len() != n && args.len() != n + 1 {
                    let usage = if head == "disc" {
                        "disc X Y R [ID]"
                    } else {
                        "rect X0 Y0 X1 Y1 [ID]"
                    };
                    return Err(parse_err(line, format!("expected `{usage}`")));
                }
                let id = match args.get(n) {
                    Some(id) => id.to_string(),
                    None => {
                        auto_id += 1;
                        format!("obs{auto_id}")
                    }
                };
                if scn.world.obstacle_index(&id).is_some() {
                    return Err(parse_err(line, format!("duplicate obstacle id {id:?}")));
                }
                let obstacle = if head == "disc" {
                    Obstacle::disc(
                        id,
                        Vec2::new(number(args[0], line, "x")?, number(args[1], line, "y")?),
                        number(args[2], line, "r")?,
                    )
                } else {
                    Obstacle::rect(
                        id,
                        Vec2::new(number(args[0], line, "x0")?, number(args[1], line, "y0")?),
                        Vec2::new(number(args[2], line, "x1")?, number(args[3], line, "y1")?),
                    )
                };
                obstacle
                    .shape
                    .validate(&obstacle.id)
                    .map_err(|e| parse_err(line, e.to_string()))?;
                scn.world.obstacles.push(obstacle);
            }
            "device" => {
                let a = expect_args(args, 3, line, "device ID X Y")?;
                if scn.world.devices.iter().any(|d| d.id == a[0]) {
                    return Err(parse_err(line, format!("duplicate device id {:?}", a[0])));
                }
                let p = Vec2::new(number(a[1], line, "x")?, number(a[2], line, "y")?);
                scn.world.devices.push(Device {
                    id: a[0].to_string(),
                    position: p,
                });
            }
            "target" => {
                let a = expect_args(args, 2, line, "target X Y")?;
                scn.targets.push(Vec2::new(
                    number(a[0], line, "x")?,
                    number(a[1], line, "y")?,
                ));
            }
            "set" => {
                let a = expect_args(args, 2, line, "set KEY VALUE")?;
                apply_setting(&mut scn, a[0], a[1], line)?;
            }
            other => return Err(parse_err(line, format!("unknown directive {other:?}"))),
        }
    }
    if !have_bounds {
        return Err(ScenarioError::Invalid("missing `bounds` line".into()));
    }
    scn.validate()?;
    Ok(scn)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut scn = parse_scenario(&text)?;
    if scn.label.is_empty() {
        scn.label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(scn)
}

impl Scenario {
    /// Checks every cross-field invariant.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        self.world
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if self.targets.is_empty() {
            return bad("no targets".into());
        }
        for t in &self.targets {
            if !self.world.bounds.contains(*t) {
                return bad(format!("target ({}, {}) lies outside the bounds", t.x, t.y));
            }
        }
        self.control
            .validate(&self.proximity)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if !self.zones.is_valid() {
            return bad("zone config out of range".into());
        }
        if !self.camera.is_valid() {
            return bad("camera config out of range".into());
        }
        let p = &self.proximity;
        if !(p.obstacle_threshold > 0.0 && p.device_serve_distance > 0.0) {
            return bad("proximity thresholds must be positive".into());
        }
        let s = &self.sensor;
        if !(s.max_range > 0.0 && s.noise >= 0.0) {
            return bad("sensor config out of range".into());
        }
        let l = &self.limits;
        if !(l.max_linear > 0.0 && l.max_angular > 0.0) {
            return bad("motion limits must be positive".into());
        }
        if self.control.default_speed > l.max_linear || self.control.rotation_speed > l.max_angular
        {
            return bad("controller speeds exceed the motion limits".into());
        }
        check_sim(&self.sim)
    }
}

fn check_sim(sim: &SimConfig) -> Result<(), ScenarioError> {
    let bad = |m: &str| Err(ScenarioError::Invalid(m.into()));
    if !(sim.dt > 0.0 && sim.dt.is_finite()) {
        return bad("sim.dt must be positive");
    }
    if !(sim.vision_period >= sim.dt && sim.vision_period.is_finite()) {
        return bad("sim.vision_period must be at least sim.dt");
    }
    if !(0.0..=1.0).contains(&sim.report_loss) {
        return bad("sim.report_loss must lie in [0, 1]");
    }
    if sim.max_time.is_nan() || sim.max_time <= 0.0 {
        return bad("sim.max_time must be positive");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Shape;

    const FIG: &str = "\
label back and forth
bounds -1.5 -1.5 6.5 6.5
mrp 0 0 0deg 0.15   # start
rect 2 2 3 3
target 5 5
target 0 0
seed 11
";

    #[test]
    fn parses_bundled_shape() {
        let s = parse_scenario(FIG).unwrap();
        assert_eq!(s.targets, vec![Vec2::new(5.0, 5.0), Vec2::new(0.0, 0.0)]);
        assert_eq!(s.world.obstacles.len(), 1);
        assert_eq!(s.world.obstacles[0].id, "obs1");
        assert!(matches!(s.world.obstacles[0].shape, Shape::Rect(_)));
        assert_eq!(s.seed, 11);
        assert_eq!(s.label, "back and forth");
    }

    #[test]
    fn empty_world_loads() {
        let s = parse_scenario("bounds -1 -1 6 6\ntarget 5 5\n").unwrap();
        assert!(s.world.obstacles.is_empty());
    }

    #[test]
    fn target_outside_bounds_is_invalid() {
        let e = parse_scenario("bounds -1 -1 6 6\ntarget 7 5\n").unwrap_err();
        assert!(matches!(e, ScenarioError::Invalid(_)), "{e}");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_scenario("bounds -1 -1 6 6\n\ndisc 1 1\n").unwrap_err();
        assert!(matches!(e, ScenarioError::Parse { line: 3, .. }), "{e}");
        let e = parse_scenario("bounds -1 -1 6 6\nset control.bogus 1\n").unwrap_err();
        assert!(matches!(e, ScenarioError::Parse { line: 2, .. }), "{e}");
        let e = parse_scenario("bounds -1 -1 6 6\nmrp 0 0 x 0.2\n").unwrap_err();
        assert!(matches!(e, ScenarioError::Parse { line: 2, .. }), "{e}");
    }

    #[test]
    fn settings_apply() {
        let s = parse_scenario(
            "bounds -1 -1 6 6\ntarget 1 1\nset control.avoid_angle 45deg\nset sim.report_loss 0.5\nset world.solid_walls false\n",
        )
        .unwrap();
        assert!((s.control.avoid_angle - 45f64.to_radians()).abs() < 1e-15);
        assert_eq!(s.sim.report_loss, 0.5);
        assert!(!s.world.solid_walls);
    }

    #[test]
    fn colliding_start_is_invalid() {
        let e = parse_scenario("bounds -1 -1 6 6\ndisc 0 0 0.5\ntarget 5 5\n").unwrap_err();
        assert!(matches!(e, ScenarioError::Invalid(_)));
    }
}
