//! Reactive navigation controller: rotate, forward, stop, avoid and send_to.
//!
//! The controller talks to the robot only through [`RobotInterface`], so the
//! same code drives the in-process simulator and the UDP transport. Every
//! command is one control tick.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{bearing, distance, wrap, Vec2, COINCIDENT_EPS};
use crate::perception::{front_obstacle_close, DetectionReport, ProximityConfig};
use crate::protocol::Telemetry;
use crate::world::VelocityCommand;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("no fresh telemetry from the robot")]
    TelemetryLost,
    #[error("robot body collided with the environment")]
    Collision,
    #[error("heading did not converge during rotation")]
    RotationStalled,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("robot interface: {0}")]
    Interface(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid control config: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub default_speed: f64,
    pub forward_interval: f64,
    pub avoid_angle: f64,
    pub rotation_speed: f64,
    pub arrival_tolerance: f64,
    pub heading_tolerance: f64,
    pub max_avoid_iterations: u32,
    pub max_send_to_recursions: u32,
    pub front_stop_distance: f64,
    /// Duration of one command.
    pub tick: f64,
    /// After a rotation, how long forward waits for a report taken at the new
    /// heading before trusting the cached one.
    pub report_settle: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            default_speed: 0.3,
            forward_interval: 2.0,
            avoid_angle: 30f64.to_radians(),
            rotation_speed: 0.8,
            arrival_tolerance: 0.1,
            heading_tolerance: 0.02,
            max_avoid_iterations: 64,
            max_send_to_recursions: 16,
            front_stop_distance: 0.5,
            tick: 0.05,
            report_settle: 0.45,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self, prox: &ProximityConfig) -> Result<(), ConfigError> {
        let positive = [
            ("default_speed", self.default_speed),
            ("forward_interval", self.forward_interval),
            ("avoid_angle", self.avoid_angle),
            ("rotation_speed", self.rotation_speed),
            ("arrival_tolerance", self.arrival_tolerance),
            ("heading_tolerance", self.heading_tolerance),
            ("front_stop_distance", self.front_stop_distance),
            ("tick", self.tick),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.report_settle >= 0.0 && self.report_settle.is_finite()) {
            return Err(ConfigError(format!(
                "report_settle must be non-negative, got {}",
                self.report_settle
            )));
        }
        if self.max_avoid_iterations == 0 || self.max_send_to_recursions == 0 {
            return Err(ConfigError("iteration bounds must be positive".into()));
        }
        if self.avoid_angle >= PI {
            return Err(ConfigError("avoid_angle must be below pi".into()));
        }
        if self.arrival_tolerance >= prox.device_serve_distance {
            return Err(ConfigError(
                "arrival_tolerance must be below the device serve distance".into(),
            ));
        }
        Ok(())
    }

    /// Upper bound on forward calls inside one send_to.
    pub fn forward_budget(&self) -> u64 {
        u64::from(self.max_send_to_recursions) * (u64::from(self.max_avoid_iterations) + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailReason {
    Unreachable,
    TelemetryLost,
    Collision,
    RotationStalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Idle,
    Rotating,
    MovingForward,
    Avoiding,
    Arrived,
    Failed(FailReason),
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Idle => "idle",
            Mode::Rotating => "rotating",
            Mode::MovingForward => "moving_forward",
            Mode::Avoiding => "avoiding",
            Mode::Arrived => "arrived",
            Mode::Failed(FailReason::Unreachable) => "failed_unreachable",
            Mode::Failed(FailReason::TelemetryLost) => "failed_telemetry_lost",
            Mode::Failed(FailReason::Collision) => "failed_collision",
            Mode::Failed(FailReason::RotationStalled) => "failed_rotation_stalled",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerState {
    pub mode: Mode,
    pub target: Option<Vec2>,
    pub recursion_depth: u32,
    pub avoid_depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveOutcome {
    Completed,
    ObstacleDetected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvoidOutcome {
    Completed,
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Arrived,
    Unreachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ObstacleDetected,
    AvoidStart,
    AvoidEnd,
    Arrived,
    Failed,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::ObstacleDetected => "obstacle_detected",
            EventKind::AvoidStart => "avoid_start",
            EventKind::AvoidEnd => "avoid_end",
            EventKind::Arrived => "arrived",
            EventKind::Failed => "failed",
        }
    }
}

/// Notifications the controller hands to its interface for logging.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlEvent {
    Mode(Mode),
    FrontBlocked(bool),
    Event { kind: EventKind, detail: String },
}

pub trait RobotInterface {
    /// Applies `cmd` for one control tick.
    fn send_command(&mut self, cmd: VelocityCommand) -> Result<(), ControlError>;
    /// Most recent telemetry; fails when the robot has gone quiet.
    fn latest_telemetry(&mut self) -> Result<Telemetry, ControlError>;
    /// Most recent detection report, if any arrived.
    fn latest_report(&mut self) -> Option<DetectionReport>;
    fn record(&mut self, _event: &ControlEvent) {}
    /// Controller state just before each command.
    fn observe_state(&mut self, _state: &ControllerState) {}
}

/// Obstacle condition: a close obstacle in the front zone, or a short front
/// ultrasonic range.
pub fn front_blocked(
    report: Option<&DetectionReport>,
    ultrasonic_front: f64,
    cfg: &ControlConfig,
) -> bool {
    report.is_some_and(front_obstacle_close) || ultrasonic_front < cfg.front_stop_distance
}

#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControlConfig,
    state: ControllerState,
    report: Option<DetectionReport>,
    stale_reports: u64,
    front_blocked: bool,
    ultrasonic_front: f64,
    /// Telemetry time at the end of the last rotation, cleared once a report
    /// at least that recent has been seen.
    settle_mark_ms: Option<u64>,
    forward_calls: u64,
    last_cmd: VelocityCommand,
}

impl Controller {
    pub fn new(cfg: ControlConfig) -> Self {
        Self {
            cfg,
            state: ControllerState::default(),
            report: None,
            stale_reports: 0,
            front_blocked: false,
            ultrasonic_front: f64::INFINITY,
            settle_mark_ms: None,
            forward_calls: 0,
            last_cmd: VelocityCommand::STOP,
        }
    }

    pub fn config(&self) -> &ControlConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn is_front_blocked(&self) -> bool {
        self.front_blocked
    }

    pub fn stale_reports(&self) -> u64 {
        self.stale_reports
    }

    pub fn cached_report(&self) -> Option<&DetectionReport> {
        self.report.as_ref()
    }

    /// Replaces the cached report unless it is older than the one held.
    /// Returns whether the cache changed.
    pub fn on_detection_report(&mut self, report: DetectionReport) -> bool {
        match &self.report {
            Some(held) if report.seq < held.seq => {
                self.stale_reports += 1;
                false
            }
            Some(held) if report.seq == held.seq => false,
            _ => {
                self.report = Some(report);
                self.front_blocked =
                    front_blocked(self.report.as_ref(), self.ultrasonic_front, &self.cfg);
                true
            }
        }
    }

    fn set_mode(&mut self, mode: Mode, io: &mut dyn RobotInterface) {
        if self.state.mode != mode {
            self.state.mode = mode;
            io.record(&ControlEvent::Mode(mode));
        }
    }

    fn event(&mut self, kind: EventKind, detail: String, io: &mut dyn RobotInterface) {
        io.record(&ControlEvent::Event { kind, detail });
    }

    /// Pulls the latest telemetry and report and recomputes the obstacle
    /// condition.
    fn refresh(&mut self, io: &mut dyn RobotInterface) -> Result<Telemetry, ControlError> {
        let tel = io.latest_telemetry()?;
        if let Some(r) = io.latest_report() {
            self.on_detection_report(r);
        }
        self.ultrasonic_front = tel.ultrasonic.front;
        let blocked = front_blocked(self.report.as_ref(), tel.ultrasonic.front, &self.cfg);
        if blocked != self.front_blocked || self.state.mode == Mode::Idle {
            io.record(&ControlEvent::FrontBlocked(blocked));
        }
        self.front_blocked = blocked;
        Ok(tel)
    }

    fn tick(
        &mut self,
        cmd: VelocityCommand,
        io: &mut dyn RobotInterface,
    ) -> Result<(), ControlError> {
        io.observe_state(&self.state);
        io.send_command(cmd)?;
        self.last_cmd = cmd;
        Ok(())
    }

    /// Zero-velocity command.
    pub fn stop(&mut self, io: &mut dyn RobotInterface) -> Result<(), ControlError> {
        self.tick(VelocityCommand::STOP, io)
    }

    /// Turns in place until the heading is within tolerance of `target_heading`.
    pub fn rotate(
        &mut self,
        target_heading: f64,
        io: &mut dyn RobotInterface,
    ) -> Result<(), ControlError> {
        if !(target_heading > -PI && target_heading <= PI) {
            return Err(ControlError::InvalidArgument(format!(
                "heading {target_heading} outside (-pi, pi]"
            )));
        }
        self.rotate_to(target_heading, Mode::Rotating, io)
    }

    fn rotate_to(
        &mut self,
        target_heading: f64,
        mode: Mode,
        io: &mut dyn RobotInterface,
    ) -> Result<(), ControlError> {
        // Generous bound: half a turn at full rate, four times over.
        let max_ticks = (4.0 * PI / (self.cfg.rotation_speed * self.cfg.tick)).ceil() as u64 + 8;
        let mut ticks = 0u64;
        loop {
            let tel = self.refresh(io)?;
            // wrap() lands in (-pi, pi], so the antipodal tie resolves CCW.
            let err = wrap(target_heading - tel.pose.theta);
            if err.abs() <= self.cfg.heading_tolerance {
                if ticks > 0 {
                    self.settle_mark_ms = Some(tel.timestamp_ms);
                }
                return Ok(());
            }
            if ticks >= max_ticks {
                return Err(ControlError::RotationStalled);
            }
            self.set_mode(mode, io);
            let omega = self.cfg.rotation_speed.copysign(err);
            self.tick(VelocityCommand::new(0.0, omega), io)?;
            ticks += 1;
        }
    }

    /// Holds still until a report taken after the last rotation arrives, or
    /// the settle window runs out. No-op when no vision source has spoken.
    fn settle(&mut self, io: &mut dyn RobotInterface) -> Result<(), ControlError> {
        let Some(mark) = self.settle_mark_ms else {
            return Ok(());
        };
        let max_ticks = (self.cfg.report_settle / self.cfg.tick).round() as u64;
        let mut waited = 0;
        loop {
            self.refresh(io)?;
            let fresh = match &self.report {
                None => true,
                Some(r) => r.timestamp_ms >= mark,
            };
            if fresh || waited >= max_ticks {
                self.settle_mark_ms = None;
                return Ok(());
            }
            self.stop(io)?;
            waited += 1;
        }
    }

    /// Drives straight for `duration`, checking the obstacle condition before
    /// every tick.
    pub fn forward(
        &mut self,
        speed: f64,
        duration: f64,
        io: &mut dyn RobotInterface,
    ) -> Result<MoveOutcome, ControlError> {
        if !(speed > 0.0 && speed.is_finite()) || !(duration >= 0.0 && duration.is_finite()) {
            return Err(ControlError::InvalidArgument(format!(
                "forward({speed}, {duration})"
            )));
        }
        self.forward_calls += 1;
        let mut ticks = (duration / self.cfg.tick).round() as u64;
        if ticks == 0 {
            if duration == 0.0 {
                return Ok(MoveOutcome::Completed);
            }
            ticks = 1;
        }
        self.settle(io)?;
        self.set_mode(Mode::MovingForward, io);
        for _ in 0..ticks {
            let tel = self.refresh(io)?;
            if self.front_blocked {
                let detail = format!(
                    "x={:.3} y={:.3} us_front={:.3}",
                    tel.pose.x, tel.pose.y, tel.ultrasonic.front
                );
                self.event(EventKind::ObstacleDetected, detail, io);
                self.stop(io)?;
                return Ok(MoveOutcome::ObstacleDetected);
            }
            self.tick(VelocityCommand::new(speed, 0.0), io)?;
        }
        Ok(MoveOutcome::Completed)
    }

    /// Turns right in fixed steps until the front is clear, then advances one
    /// interval. Repeats on renewed blockage, up to the iteration bound.
    pub fn avoid(&mut self, io: &mut dyn RobotInterface) -> Result<AvoidOutcome, ControlError> {
        self.event(
            EventKind::AvoidStart,
            format!("depth={}", self.state.recursion_depth),
            io,
        );
        self.set_mode(Mode::Avoiding, io);
        self.state.avoid_depth = 0;
        loop {
            if self.state.avoid_depth >= self.cfg.max_avoid_iterations
                || self.forward_calls >= self.cfg.forward_budget()
            {
                if self.last_cmd != VelocityCommand::STOP {
                    self.stop(io)?;
                }
                return Ok(AvoidOutcome::Unreachable);
            }
            self.state.avoid_depth += 1;
            let tel = self.refresh(io)?;
            self.rotate_to(
                wrap(tel.pose.theta - self.cfg.avoid_angle),
                Mode::Avoiding,
                io,
            )?;
            self.settle(io)?;
            self.refresh(io)?;
            if self.front_blocked {
                continue;
            }
            match self.forward(self.cfg.default_speed, self.cfg.forward_interval, io)? {
                MoveOutcome::Completed => {
                    self.event(
                        EventKind::AvoidEnd,
                        format!("iterations={}", self.state.avoid_depth),
                        io,
                    );
                    return Ok(AvoidOutcome::Completed);
                }
                MoveOutcome::ObstacleDetected => self.set_mode(Mode::Avoiding, io),
            }
        }
    }

    /// Drives to `target`, detouring around obstacles. Interface errors put
    /// the controller in a failed state before they are returned.
    pub fn send_to(
        &mut self,
        target: Vec2,
        io: &mut dyn RobotInterface,
    ) -> Result<SendOutcome, ControlError> {
        if !target.is_finite() {
            return Err(ControlError::InvalidArgument(format!("target {target:?}")));
        }
        self.state.target = Some(target);
        self.state.recursion_depth = 0;
        self.state.avoid_depth = 0;
        self.forward_calls = 0;
        match self.send_to_inner(target, io) {
            Ok(out) => Ok(out),
            Err(e) => {
                let reason = match e {
                    ControlError::Collision => FailReason::Collision,
                    ControlError::RotationStalled => FailReason::RotationStalled,
                    _ => FailReason::TelemetryLost,
                };
                self.event(EventKind::Failed, e.to_string(), io);
                self.set_mode(Mode::Failed(reason), io);
                Err(e)
            }
        }
    }

    fn send_to_inner(
        &mut self,
        target: Vec2,
        io: &mut dyn RobotInterface,
    ) -> Result<SendOutcome, ControlError> {
        loop {
            let tel = self.refresh(io)?;
            let pose = tel.pose2d();
            let d = distance(pose.position, target);
            if d <= self.cfg.arrival_tolerance {
                if self.last_cmd != VelocityCommand::STOP {
                    self.stop(io)?;
                }
                self.set_mode(Mode::Arrived, io);
                self.event(EventKind::Arrived, format!("error={d:.4}"), io);
                return Ok(SendOutcome::Arrived);
            }
            if self.forward_calls >= self.cfg.forward_budget() {
                return self.unreachable("forward budget exhausted", io);
            }
            if d > COINCIDENT_EPS {
                let b = bearing(&pose, target).expect("non-coincident target");
                self.rotate_to(wrap(pose.heading + b), Mode::Rotating, io)?;
            }
            let duration = self.cfg.forward_interval.min(d / self.cfg.default_speed);
            match self.forward(self.cfg.default_speed, duration, io)? {
                MoveOutcome::Completed => {}
                MoveOutcome::ObstacleDetected => {
                    if self.state.recursion_depth >= self.cfg.max_send_to_recursions {
                        return self.unreachable("recursion bound reached", io);
                    }
                    self.state.recursion_depth += 1;
                    if self.avoid(io)? == AvoidOutcome::Unreachable {
                        return self.unreachable("avoid iterations exhausted", io);
                    }
                }
            }
        }
    }

    fn unreachable(
        &mut self,
        why: &str,
        io: &mut dyn RobotInterface,
    ) -> Result<SendOutcome, ControlError> {
        if self.last_cmd != VelocityCommand::STOP {
            self.stop(io)?;
        }
        self.event(EventKind::Failed, format!("unreachable: {why}"), io);
        self.set_mode(Mode::Failed(FailReason::Unreachable), io);
        Ok(SendOutcome::Unreachable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;
    use crate::perception::{CameraConfig, Detection, ObjectKind, VisionSource, Zone, ZoneConfig};
    use crate::protocol::{ImuField, PoseField, VelocityField};
    use crate::world::{
        check_collision, step_kinematics, ultrasonic_read, Aabb, MotionLimits, Obstacle,
        SensorConfig, WorldModel,
    };
    use std::f64::consts::FRAC_PI_2;

    /// Minimal stand-in robot: kinematics, ultrasonic and a camera report
    /// every four ticks.
    struct Bench {
        world: WorldModel,
        t_ms: u64,
        seq: u64,
        last: VelocityCommand,
        vision: Option<VisionSource>,
        report: Option<DetectionReport>,
        commands: Vec<VelocityCommand>,
        log: Vec<ControlEvent>,
    }

    impl Bench {
        fn new(world: WorldModel, vision: bool) -> Self {
            let mut b = Self {
                world,
                t_ms: 0,
                seq: 1,
                last: VelocityCommand::STOP,
                vision: vision.then(VisionSource::new),
                report: None,
                commands: vec![],
                log: vec![],
            };
            b.look();
            b
        }

        fn look(&mut self) {
            if self.t_ms.is_multiple_of(200) {
                if let Some(v) = &mut self.vision {
                    let r = v.report(
                        &self.world,
                        &CameraConfig::default(),
                        &ZoneConfig::default(),
                        &ProximityConfig::default(),
                        self.t_ms,
                    );
                    self.report = Some(r);
                }
            }
        }

        fn events(&self) -> Vec<EventKind> {
            self.log
                .iter()
                .filter_map(|e| match e {
                    ControlEvent::Event { kind, .. } => Some(*kind),
                    _ => None,
                })
                .collect()
        }
    }

    impl RobotInterface for Bench {
        fn send_command(&mut self, cmd: VelocityCommand) -> Result<(), ControlError> {
            self.commands.push(cmd);
            self.world.mrp =
                step_kinematics(&self.world.mrp, &cmd, 0.05, &MotionLimits::default()).unwrap();
            if check_collision(&self.world) {
                return Err(ControlError::Collision);
            }
            self.last = cmd;
            self.t_ms += 50;
            self.seq += 1;
            self.look();
            Ok(())
        }

        fn latest_telemetry(&mut self) -> Result<Telemetry, ControlError> {
            let p = self.world.mrp;
            Ok(Telemetry {
                seq: self.seq,
                timestamp_ms: self.t_ms,
                pose: PoseField {
                    x: p.position.x,
                    y: p.position.y,
                    theta: p.heading,
                },
                velocity: VelocityField {
                    v: self.last.linear,
                    omega: self.last.angular,
                },
                imu: ImuField {
                    yaw: p.heading,
                    pitch: 0.0,
                    roll: 0.0,
                },
                ultrasonic: ultrasonic_read(&self.world, &SensorConfig::default()).unwrap(),
            })
        }

        fn latest_report(&mut self) -> Option<DetectionReport> {
            self.report.clone()
        }

        fn record(&mut self, event: &ControlEvent) {
            self.log.push(event.clone());
        }
    }

    fn arena(pose: Pose2D) -> WorldModel {
        let mut w = WorldModel::new(
            Aabb::new(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0)),
            pose,
            0.15,
        );
        w.solid_walls = false;
        w
    }

    fn obstacle_report(seq: u64, zone: Zone, close: bool) -> DetectionReport {
        DetectionReport {
            seq,
            timestamp_ms: 0,
            detections: vec![Detection {
                kind: ObjectKind::Obstacle,
                zone,
                est_distance: Some(if close { 0.5 } else { 3.0 }),
                close,
                source_id: "o".into(),
            }],
        }
    }

    #[test]
    fn config_validation() {
        let prox = ProximityConfig::default();
        assert!(ControlConfig::default().validate(&prox).is_ok());
        let bad = ControlConfig {
            avoid_angle: PI,
            ..Default::default()
        };
        assert!(bad.validate(&prox).is_err());
        let bad = ControlConfig {
            arrival_tolerance: 2.0,
            ..Default::default()
        };
        assert!(bad.validate(&prox).is_err());
        let bad = ControlConfig {
            default_speed: 0.0,
            ..Default::default()
        };
        assert!(bad.validate(&prox).is_err());
    }

    #[test]
    fn rotate_when_aligned_issues_nothing() {
        let mut bench = Bench::new(arena(Pose2D::new(0.0, 0.0, 0.3)), false);
        let mut c = Controller::new(ControlConfig::default());
        c.rotate(0.3, &mut bench).unwrap();
        assert!(bench.commands.is_empty());
    }

    #[test]
    fn rotate_quarter_turn_ccw() {
        let mut bench = Bench::new(arena(Pose2D::new(0.0, 0.0, 0.0)), false);
        let mut c = Controller::new(ControlConfig::default());
        c.rotate(FRAC_PI_2, &mut bench).unwrap();
        assert!(bench
            .commands
            .iter()
            .all(|cmd| cmd.linear == 0.0 && cmd.angular == 0.8));
        assert!(wrap(bench.world.mrp.heading - FRAC_PI_2).abs() <= 0.02);
        assert_eq!(bench.world.mrp.position, Vec2::ZERO);
    }

    #[test]
    fn rotate_antipodal_goes_ccw() {
        let mut bench = Bench::new(arena(Pose2D::new(0.0, 0.0, 0.0)), false);
        let mut c = Controller::new(ControlConfig::default());
        c.rotate(PI, &mut bench).unwrap();
        assert!(bench.commands[0].angular > 0.0);
        assert!(wrap(bench.world.mrp.heading - PI).abs() <= 0.02);
        assert!(c.rotate(-PI, &mut bench).is_err());
    }

    #[test]
    fn forward_zero_duration() {
        let mut bench = Bench::new(arena(Pose2D::new(0.0, 0.0, 0.0)), false);
        let mut c = Controller::new(ControlConfig::default());
        assert_eq!(
            c.forward(0.3, 0.0, &mut bench).unwrap(),
            MoveOutcome::Completed
        );
        assert!(bench.commands.is_empty());
    }

    #[test]
    fn forward_clear_path_travels_speed_times_duration() {
        let mut bench = Bench::new(arena(Pose2D::new(0.0, 0.0, 0.0)), false);
        let mut c = Controller::new(ControlConfig::default());
        assert_eq!(
            c.forward(0.3, 2.0, &mut bench).unwrap(),
            MoveOutcome::Completed
        );
        // Integrating 40 ticks of 0.3 m/s by hand.
        let expected: f64 = (0..40).map(|_| 0.3 * 0.05).sum();
        assert!((bench.world.mrp.position.x - expected).abs() <= 0.015);
        assert!((bench.world.mrp.position.x - 0.6).abs() <= 0.015);
    }

    #[test]
    fn forward_stops_before_near_obstacle() {
        // Rect face 0.4 m ahead of the center.
        let w = arena(Pose2D::new(0.0, 0.0, 0.0)).with_obstacle(Obstacle::rect(
            "box",
            Vec2::new(0.4, -1.0),
            Vec2::new(1.0, 1.0),
        ));
        let mut bench = Bench::new(w, false);
        let mut c = Controller::new(ControlConfig::default());
        assert_eq!(
            c.forward(0.3, 2.0, &mut bench).unwrap(),
            MoveOutcome::ObstacleDetected
        );
        assert!(bench.world.mrp.position.x <= 0.015 + 1e-12);
        assert_eq!(bench.events(), vec![EventKind::ObstacleDetected]);
        assert_eq!(c.state().mode, Mode::MovingForward);
    }

    #[test]
    fn stop_is_idempotent() {
        let mut bench = Bench::new(arena(Pose2D::new(0.0, 0.0, 0.0)), false);
        let mut c = Controller::new(ControlConfig::default());
        c.forward(0.3, 0.5, &mut bench).unwrap();
        c.stop(&mut bench).unwrap();
        let after_one = (bench.world.mrp, *c.state());
        assert_eq!(bench.latest_telemetry().unwrap().velocity.v, 0.0);
        c.stop(&mut bench).unwrap();
        assert_eq!((bench.world.mrp, *c.state()), after_one);
    }

    #[test]
    fn detection_report_staleness_and_fusion() {
        let cfg = ControlConfig::default();
        let empty = DetectionReport {
            seq: 1,
            timestamp_ms: 0,
            detections: vec![],
        };
        assert!(!front_blocked(Some(&empty), 3.0, &cfg));
        assert!(front_blocked(
            Some(&obstacle_report(2, Zone::Front, true)),
            3.0,
            &cfg
        ));
        assert!(!front_blocked(
            Some(&obstacle_report(2, Zone::Left, true)),
            3.0,
            &cfg
        ));
        assert!(!front_blocked(
            Some(&obstacle_report(2, Zone::Front, false)),
            3.0,
            &cfg
        ));
        assert!(front_blocked(None, 0.49, &cfg));

        let mut c = Controller::new(cfg);
        assert!(c.on_detection_report(obstacle_report(7, Zone::Front, true)));
        assert!(!c.on_detection_report(DetectionReport {
            seq: 5,
            timestamp_ms: 0,
            detections: vec![]
        }));
        assert_eq!(c.cached_report().unwrap().seq, 7);
        assert_eq!(c.stale_reports(), 1);
        assert!(c.is_front_blocked());
    }

    #[test]
    fn avoid_single_right_turn_clears_offset_disc() {
        // Disc left of the heading line: blocked straight ahead, clear after
        // one 30 degree right turn.
        let w = arena(Pose2D::new(0.0, 0.0, 0.0)).with_obstacle(Obstacle::disc(
            "d",
            Vec2::new(0.9, 0.35),
            0.2,
        ));
        let mut bench = Bench::new(w, true);
        let mut c = Controller::new(ControlConfig::default());
        assert_eq!(
            c.forward(0.3, 2.0, &mut bench).unwrap(),
            MoveOutcome::ObstacleDetected
        );
        bench.commands.clear();
        assert_eq!(c.avoid(&mut bench).unwrap(), AvoidOutcome::Completed);
        assert_eq!(c.state().avoid_depth, 1);
        assert!(bench.commands[0].angular < 0.0, "right turn first");
        let heading = bench.world.mrp.heading;
        assert!(
            (heading + 30f64.to_radians()).abs() <= 0.02 + 1e-9,
            "{heading}"
        );
        let ev = bench.events();
        assert_eq!(
            &ev[ev.len() - 2..],
            &[EventKind::AvoidStart, EventKind::AvoidEnd]
        );
    }

    #[test]
    fn avoid_three_turns_past_wide_wall() {
        // Wall face 0.8 m ahead spanning roughly +-45 degrees of the heading
        // and continuing to the left.
        let w = arena(Pose2D::new(0.0, 0.0, 0.0)).with_obstacle(Obstacle::rect(
            "wall",
            Vec2::new(0.8, -0.8),
            Vec2::new(1.0, 3.0),
        ));
        let mut bench = Bench::new(w, true);
        let mut c = Controller::new(ControlConfig::default());
        assert_eq!(
            c.forward(0.3, 2.0, &mut bench).unwrap(),
            MoveOutcome::ObstacleDetected
        );
        bench.commands.clear();
        assert_eq!(c.avoid(&mut bench).unwrap(), AvoidOutcome::Completed);
        assert!(bench.commands[0].angular < 0.0);
        let heading = bench.world.mrp.heading;
        assert!(
            heading <= -FRAC_PI_2 + 0.04,
            "turned at least 90 degrees right: {heading}"
        );
        assert!(c.state().avoid_depth >= 3);
    }

    #[test]
    fn avoid_enclosed_robot_is_unreachable() {
        let w = arena(Pose2D::new(0.0, 0.0, 0.0))
            .with_obstacle(Obstacle::rect(
                "n",
                Vec2::new(-0.6, 0.4),
                Vec2::new(0.6, 0.6),
            ))
            .with_obstacle(Obstacle::rect(
                "s",
                Vec2::new(-0.6, -0.6),
                Vec2::new(0.6, -0.4),
            ))
            .with_obstacle(Obstacle::rect(
                "e",
                Vec2::new(0.4, -0.6),
                Vec2::new(0.6, 0.6),
            ))
            .with_obstacle(Obstacle::rect(
                "w",
                Vec2::new(-0.6, -0.6),
                Vec2::new(-0.4, 0.6),
            ));
        let mut bench = Bench::new(w, true);
        let mut c = Controller::new(ControlConfig::default());
        assert_eq!(c.avoid(&mut bench).unwrap(), AvoidOutcome::Unreachable);
        assert_eq!(c.state().avoid_depth, 64);
        assert!(!check_collision(&bench.world));
    }

    #[test]
    fn send_to_current_position_is_immediate() {
        let mut bench = Bench::new(arena(Pose2D::new(1.0, 1.0, 0.0)), true);
        let mut c = Controller::new(ControlConfig::default());
        assert_eq!(
            c.send_to(Vec2::new(1.05, 1.0), &mut bench).unwrap(),
            SendOutcome::Arrived
        );
        assert!(bench.commands.is_empty());
        assert_eq!(c.state().mode, Mode::Arrived);
    }

    #[test]
    fn send_to_empty_world() {
        let mut bench = Bench::new(arena(Pose2D::new(0.0, 0.0, 0.0)), true);
        let mut c = Controller::new(ControlConfig::default());
        let mut path = 0.0;
        let mut prev = bench.world.mrp.position;
        assert_eq!(
            c.send_to(Vec2::new(5.0, 5.0), &mut bench).unwrap(),
            SendOutcome::Arrived
        );
        let mut replay = Pose2D::new(0.0, 0.0, 0.0);
        for cmd in &bench.commands {
            replay = step_kinematics(&replay, cmd, 0.05, &MotionLimits::default()).unwrap();
            path += distance(prev, replay.position);
            prev = replay.position;
        }
        assert!(distance(bench.world.mrp.position, Vec2::new(5.0, 5.0)) <= 0.1);
        assert!(path <= 1.02 * 50f64.sqrt(), "{path}");
    }

    #[test]
    fn send_to_detours_around_disc() {
        let w = arena(Pose2D::new(0.0, 0.0, 0.0)).with_obstacle(Obstacle::disc(
            "d",
            Vec2::new(2.5, 2.5),
            0.5,
        ));
        let mut bench = Bench::new(w, true);
        let mut c = Controller::new(ControlConfig::default());
        assert_eq!(
            c.send_to(Vec2::new(5.0, 5.0), &mut bench).unwrap(),
            SendOutcome::Arrived
        );
        assert!(bench.events().contains(&EventKind::AvoidStart));
        assert!(c.state().recursion_depth <= 16);
    }

    #[test]
    fn send_to_enclosed_target_is_unreachable() {
        let w = arena(Pose2D::new(0.0, 0.0, 0.0))
            .with_obstacle(Obstacle::rect(
                "n",
                Vec2::new(2.0, 3.0),
                Vec2::new(4.0, 3.2),
            ))
            .with_obstacle(Obstacle::rect(
                "s",
                Vec2::new(2.0, 0.8),
                Vec2::new(4.0, 1.0),
            ))
            .with_obstacle(Obstacle::rect(
                "e",
                Vec2::new(3.8, 0.8),
                Vec2::new(4.0, 3.2),
            ))
            .with_obstacle(Obstacle::rect(
                "w",
                Vec2::new(2.0, 0.8),
                Vec2::new(2.2, 3.2),
            ));
        let mut bench = Bench::new(w, true);
        let mut c = Controller::new(ControlConfig::default());
        assert_eq!(
            c.send_to(Vec2::new(3.0, 2.0), &mut bench).unwrap(),
            SendOutcome::Unreachable
        );
        assert_eq!(c.state().mode, Mode::Failed(FailReason::Unreachable));
        assert!(!check_collision(&bench.world));
    }
}
