use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::Scenario;
use crate::perception::{CameraConfig, DetectionReport, ProximityConfig, VisionSource, ZoneConfig};
use crate::protocol::{fit_report, ImuField, PoseField, Telemetry, VelocityField};
use crate::world::{
    check_collision, step_kinematics, ultrasonic_read_noisy, MotionLimits, SensorConfig,
    UltrasonicReading, VelocityCommand, WorldError, WorldModel,
};

/// Virtual timestamp of tick `k`, in milliseconds.
pub fn ms_at(k: u64, dt: f64) -> u64 {
    (k as f64 * dt * 1000.0).round() as u64
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("step would collide; command not applied")]
    Collision,
    #[error(transparent)]
    Command(#[from] WorldError),
}

/// The simulated robot body: integrates commands and produces telemetry.
#[derive(Debug, Clone)]
pub struct RobotNode {
    world: WorldModel,
    limits: MotionLimits,
    sensor: SensorConfig,
    dt: f64,
    tick: u64,
    velocity: VelocityCommand,
    collided: bool,
    rng: ChaCha8Rng,
    telemetry: Telemetry,
}

impl RobotNode {
    pub fn new(scn: &Scenario) -> Self {
        let mut node = Self {
            world: scn.world.clone(),
            limits: scn.limits,
            sensor: scn.sensor,
            dt: scn.sim.dt,
            tick: 0,
            velocity: VelocityCommand::STOP,
            collided: false,
            rng: ChaCha8Rng::seed_from_u64(scn.seed),
            telemetry: Telemetry {
                seq: 0,
                timestamp_ms: 0,
                pose: PoseField {
                    x: 0.0,
                    y: 0.0,
                    theta: 0.0,
                },
                velocity: VelocityField { v: 0.0, omega: 0.0 },
                imu: ImuField::default(),
                ultrasonic: UltrasonicReading {
                    left: 0.0,
                    front: 0.0,
                    right: 0.0,
                },
            },
        };
        node.sense();
        node
    }

    fn sense(&mut self) {
        let p = self.world.mrp;
        let ultrasonic = ultrasonic_read_noisy(&self.world, &self.sensor, &mut self.rng).unwrap_or(
            UltrasonicReading {
                left: 0.0,
                front: 0.0,
                right: 0.0,
            },
        );
        self.telemetry = Telemetry {
            seq: self.tick + 1,
            timestamp_ms: ms_at(self.tick, self.dt),
            pose: PoseField {
                x: p.position.x,
                y: p.position.y,
                theta: p.heading,
            },
            velocity: VelocityField {
                v: self.velocity.linear,
                omega: self.velocity.angular,
            },
            imu: ImuField {
                yaw: p.heading,
                pitch: 0.0,
                roll: 0.0,
            },
            ultrasonic,
        };
    }

    pub fn world(&self) -> &WorldModel {
        &self.world
    }

    pub fn telemetry(&self) -> Telemetry {
        self.telemetry
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        ms_at(self.tick, self.dt) as f64 / 1000.0
    }

    pub fn collided(&self) -> bool {
        self.collided
    }

    /// Advances one tick. A command that would end in collision is replaced
    /// by a stop; time advances either way.
    pub fn step(&mut self, cmd: VelocityCommand) -> Result<(), StepError> {
        let result = match step_kinematics(&self.world.mrp, &cmd, self.dt, &self.limits) {
            Ok(next) => {
                let before = self.world.mrp;
                self.world.mrp = next;
                if check_collision(&self.world) {
                    self.world.mrp = before;
                    self.collided = true;
                    Err(StepError::Collision)
                } else {
                    Ok(())
                }
            }
            Err(e) => Err(StepError::Command(e)),
        };
        self.velocity = if result.is_ok() {
            cmd
        } else {
            VelocityCommand::STOP
        };
        self.tick += 1;
        self.sense();
        result
    }
}

/// The camera: turns telemetry poses into detection reports at a fixed
/// cadence.
#[derive(Debug, Clone)]
pub struct VisionNode {
    world: WorldModel,
    camera: CameraConfig,
    zones: ZoneConfig,
    proximity: ProximityConfig,
    source: VisionSource,
    period_ms: u64,
    next_due_ms: u64,
}

impl VisionNode {
    pub fn new(scn: &Scenario) -> Self {
        Self {
            world: scn.world.clone(),
            camera: scn.camera,
            zones: scn.zones,
            proximity: scn.proximity,
            source: VisionSource::new(),
            period_ms: ((scn.sim.vision_period * 1000.0).round() as u64).max(1),
            next_due_ms: 0,
        }
    }

    /// A report when `tel` reaches the next frame time.
    pub fn on_telemetry(&mut self, tel: &Telemetry) -> Option<DetectionReport> {
        if tel.timestamp_ms < self.next_due_ms {
            return None;
        }
        while self.next_due_ms <= tel.timestamp_ms {
            self.next_due_ms += self.period_ms;
        }
        self.world.mrp = tel.pose2d();
        let report = self.source.report(
            &self.world,
            &self.camera,
            &self.zones,
            &self.proximity,
            tel.timestamp_ms,
        );
        Some(fit_report(&report))
    }

    /// Whether telemetry stamped `timestamp_ms` falls on a frame time.
    pub fn is_frame_time(&self, timestamp_ms: u64) -> bool {
        timestamp_ms.is_multiple_of(self.period_ms)
    }
}
