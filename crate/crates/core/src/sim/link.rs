use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::log::{LogEvent, LogRow, TrajectoryLog, Transition};
use super::nodes::{RobotNode, StepError, VisionNode};
use super::Scenario;
use crate::controller::{ControlError, ControlEvent, ControllerState, Mode, RobotInterface};
use crate::geometry::{Pose2D, Vec2};
use crate::perception::DetectionReport;
use crate::protocol::{decode, encode, CommandMsg, Inbox, Telemetry, WireMessage};
use crate::world::{line_of_sight, VelocityCommand};

#[derive(Debug, Clone, Default)]
pub struct LinkOptions {
    /// Sleep this long per tick to follow wall-clock time.
    pub pace: Option<Duration>,
    /// Shared report mailbox, so other threads can inject reports.
    pub inbox: Option<Arc<Inbox>>,
    /// Snapshot refreshed every tick for observers.
    pub status: Option<Arc<Mutex<LinkStatus>>>,
    /// When raised, the next command fails and the run unwinds.
    pub cancel: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkStatus {
    pub t: f64,
    pub pose: Pose2D,
    pub front_blocked: bool,
    pub controller: ControllerState,
    pub events: Vec<LogEvent>,
}

/// Connects a controller to the simulated robot and camera in one thread.
/// Every message crosses an encode/decode round so the controller sees
/// exactly what it would see over UDP.
pub struct InProcessLink {
    robot: RobotNode,
    vision: Option<VisionNode>,
    report_loss: f64,
    loss_rng: ChaCha8Rng,
    inbox: Arc<Inbox>,
    telemetry: Telemetry,
    command_seq: u64,
    max_ticks: u64,
    log: TrajectoryLog,
    mode: Mode,
    front_blocked: bool,
    controller: ControllerState,
    active_device: Option<Vec2>,
    devices: Vec<Vec2>,
    options: LinkOptions,
    started: Instant,
}

fn through_wire(msg: WireMessage) -> Result<WireMessage, ControlError> {
    let bytes = encode(&msg).map_err(|e| ControlError::Interface(e.to_string()))?;
    decode(&bytes).map_err(|e| ControlError::Interface(e.to_string()))
}

impl InProcessLink {
    pub fn new(scn: &Scenario, options: LinkOptions) -> Self {
        let mut loss_rng = ChaCha8Rng::seed_from_u64(scn.seed);
        loss_rng.set_stream(1);
        let robot = RobotNode::new(scn);
        let telemetry = robot.telemetry();
        let mut link = Self {
            vision: scn.sim.vision.then(|| VisionNode::new(scn)),
            report_loss: scn.sim.report_loss,
            loss_rng,
            inbox: options.inbox.clone().unwrap_or_default(),
            telemetry,
            command_seq: 0,
            max_ticks: (scn.sim.max_time / scn.sim.dt).ceil() as u64,
            log: TrajectoryLog {
                min_clearance: f64::INFINITY,
                ..Default::default()
            },
            mode: Mode::Idle,
            front_blocked: false,
            controller: ControllerState::default(),
            active_device: None,
            devices: scn.world.devices.iter().map(|d| d.position).collect(),
            robot,
            options,
            started: Instant::now(),
        };
        link.publish();
        link.push_row();
        link
    }

    pub fn robot(&self) -> &RobotNode {
        &self.robot
    }

    pub fn inbox(&self) -> &Arc<Inbox> {
        &self.inbox
    }

    pub fn collided(&self) -> bool {
        self.robot.collided()
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn into_log(self) -> TrajectoryLog {
        self.log
    }

    /// Marks the device nearest `target` as the one the LoS column tracks.
    pub fn set_target(&mut self, target: Vec2) {
        self.active_device = self
            .devices
            .iter()
            .copied()
            .min_by(|a, b| (*a - target).norm().total_cmp(&(*b - target).norm()));
    }

    /// Sends fresh telemetry, and a report when one is due, through the wire.
    fn publish(&mut self) {
        let tel = self.robot.telemetry();
        if let Ok(WireMessage::Telemetry(t)) = through_wire(WireMessage::Telemetry(tel)) {
            self.telemetry = t;
        }
        if let Some(report) = self
            .vision
            .as_mut()
            .and_then(|v| v.on_telemetry(&self.telemetry))
        {
            let lost = self.report_loss > 0.0 && self.loss_rng.random::<f64>() < self.report_loss;
            if !lost {
                if let Ok(bytes) = encode(&WireMessage::DetectionReport(report)) {
                    self.inbox.offer_bytes(&bytes);
                }
            }
        }
    }

    fn push_row(&mut self) {
        let world = self.robot.world();
        let p = world.mrp;
        let clearance = world.clearance();
        let los = self
            .active_device
            .map(|d| line_of_sight(p.position, d, world));
        let tel = &self.telemetry;
        self.log.min_clearance = self.log.min_clearance.min(clearance);
        self.log.rows.push(LogRow {
            t: self.robot.time(),
            x: p.position.x,
            y: p.position.y,
            theta: p.heading,
            v: tel.velocity.v,
            omega: tel.velocity.omega,
            us_left: tel.ultrasonic.left,
            us_front: tel.ultrasonic.front,
            us_right: tel.ultrasonic.right,
            mode: self.mode.label().to_string(),
            front_blocked: self.front_blocked,
            los_to_active_device: los,
            clearance,
        });
        if let Some(status) = &self.options.status {
            let mut s = status.lock().unwrap_or_else(|e| e.into_inner());
            s.t = self.robot.time();
            s.pose = p;
            s.front_blocked = self.front_blocked;
            s.controller = self.controller;
        }
    }

    fn pace(&self) {
        if let Some(step) = self.options.pace {
            let due = self.started + step * self.robot.tick() as u32;
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
    }
}

impl RobotInterface for InProcessLink {
    fn send_command(&mut self, cmd: VelocityCommand) -> Result<(), ControlError> {
        if self
            .options
            .cancel
            .as_ref()
            .is_some_and(|c| c.load(Ordering::Relaxed))
        {
            return Err(ControlError::Interface("cancelled".into()));
        }
        if self.robot.tick() >= self.max_ticks {
            return Err(ControlError::Interface(
                "simulation time limit reached".into(),
            ));
        }
        self.command_seq += 1;
        let msg = WireMessage::Command(CommandMsg {
            seq: self.command_seq,
            timestamp_ms: self.telemetry.timestamp_ms,
            command: cmd,
        });
        let cmd = match through_wire(msg)? {
            WireMessage::Command(c) => c.command,
            other => {
                return Err(ControlError::Interface(format!(
                    "unexpected {:?}",
                    other.message_type()
                )))
            }
        };
        let stepped = self.robot.step(cmd);
        self.publish();
        self.push_row();
        self.pace();
        match stepped {
            Ok(()) => Ok(()),
            Err(StepError::Collision) => Err(ControlError::Collision),
            Err(StepError::Command(e)) => Err(ControlError::Interface(e.to_string())),
        }
    }

    fn latest_telemetry(&mut self) -> Result<Telemetry, ControlError> {
        Ok(self.telemetry)
    }

    fn latest_report(&mut self) -> Option<DetectionReport> {
        self.inbox.report()
    }

    fn observe_state(&mut self, state: &ControllerState) {
        self.controller = *state;
    }

    fn record(&mut self, event: &ControlEvent) {
        let t = self.robot.time();
        match event {
            ControlEvent::Mode(m) => {
                self.mode = *m;
                self.log.transitions.push(Transition {
                    t,
                    mode: m.label().to_string(),
                });
                self.controller.mode = *m;
                if let Some(status) = &self.options.status {
                    status
                        .lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .controller
                        .mode = *m;
                }
            }
            ControlEvent::FrontBlocked(b) => self.front_blocked = *b,
            ControlEvent::Event { kind, detail } => {
                let ev = LogEvent {
                    t,
                    kind: *kind,
                    detail: detail.clone(),
                };
                if let Some(status) = &self.options.status {
                    status
                        .lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .events
                        .push(ev.clone());
                }
                self.log.events.push(ev);
            }
        }
    }
}
