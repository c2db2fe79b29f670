//! The three UDP roles. The robot advances exactly one tick per command, so
//! the split-process run follows the same clock as the in-process one.

use std::fs;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};

use super::{scenario_with_overrides, CliError, Role, ServeArgs, EXIT_FAILED, EXIT_OK};
use crate::controller::{ControlError, ControlEvent, Controller, RobotInterface, SendOutcome};
use crate::perception::DetectionReport;
use crate::protocol::udp::{Endpoint, EndpointConfig, Role as UdpRole};
use crate::protocol::{CommandMsg, Telemetry, WireMessage};
use crate::sim::{LogEvent, RobotNode, Scenario, StepError, TrajectoryLog, Transition, VisionNode};
use crate::world::VelocityCommand;

const POLL: Duration = Duration::from_millis(100);
const STARTUP: Duration = Duration::from_secs(15);
const TELEMETRY_STALE: Duration = Duration::from_millis(500);

fn install_interrupt() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    // A second installation in the same process fails; the first one wins.
    let _ = ctrlc::set_handler(move || f.store(true, Ordering::Relaxed));
    flag
}

struct Idle {
    limit: Option<Duration>,
    last: Option<Instant>,
}

impl Idle {
    fn touch(&mut self) {
        self.last = Some(Instant::now());
    }

    fn expired(&self) -> bool {
        matches!((self.limit, self.last), (Some(l), Some(t)) if t.elapsed() >= l)
    }
}

pub fn cmd_serve(args: &ServeArgs) -> Result<u8, CliError> {
    let scn = scenario_with_overrides(&args.scenario, args.seed, args.dt)?;
    let addrs = args.addrs.endpoints();
    let role = match args.role {
        Role::Vision => UdpRole::Vision,
        Role::Control => UdpRole::Control,
        Role::Robot => UdpRole::Robot,
    };
    let ep = Endpoint::bind(role, &addrs).map_err(CliError::env)?;
    eprintln!("{:?} role listening on {}", args.role, ep.local_addr());
    let stop = install_interrupt();
    let idle = Idle {
        limit: args.idle_exit.map(Duration::from_secs_f64),
        last: None,
    };
    match args.role {
        Role::Robot => serve_robot(&scn, &ep, &addrs, &stop, idle),
        Role::Vision => serve_vision(&scn, &ep, &addrs, &stop, idle),
        Role::Control => serve_control(&scn, ep, &addrs, stop, args),
    }
}

fn serve_robot(
    scn: &Scenario,
    ep: &Endpoint,
    addrs: &EndpointConfig,
    stop: &AtomicBool,
    mut idle: Idle,
) -> Result<u8, CliError> {
    let mut robot = RobotNode::new(scn);
    let mut last_seq: Option<u64> = None;
    let publish = |robot: &RobotNode| -> Result<(), CliError> {
        let msg = WireMessage::Telemetry(robot.telemetry());
        ep.send(&msg, addrs.vision).map_err(CliError::env)?;
        ep.send(&msg, addrs.control).map_err(CliError::env)
    };
    publish(&robot)?;
    while !stop.load(Ordering::Relaxed) && !idle.expired() {
        match ep.inbox().wait_command_after(last_seq, POLL) {
            Some(c) => {
                idle.touch();
                last_seq = Some(c.seq);
                match robot.step(c.command) {
                    // Contact ends the run, as it does in process; the
                    // controller sees telemetry stop.
                    Err(e @ StepError::Collision) => {
                        eprintln!("robot: t={:.2} {e}", robot.time());
                        return Ok(EXIT_FAILED);
                    }
                    Err(e) => eprintln!("robot: t={:.2} {e}", robot.time()),
                    Ok(()) => {}
                }
                publish(&robot)?;
            }
            // Until the controller speaks, keep announcing the start state.
            None if last_seq.is_none() => publish(&robot)?,
            None => {}
        }
    }
    Ok(EXIT_OK)
}

fn serve_vision(
    scn: &Scenario,
    ep: &Endpoint,
    addrs: &EndpointConfig,
    stop: &AtomicBool,
    mut idle: Idle,
) -> Result<u8, CliError> {
    let mut node = VisionNode::new(scn);
    let mut last_seq: Option<u64> = None;
    let mut last_report: Option<DetectionReport> = None;
    while !stop.load(Ordering::Relaxed) && !idle.expired() {
        match ep.inbox().wait_telemetry_after(last_seq, POLL) {
            Some(tel) => {
                idle.touch();
                last_seq = Some(tel.seq);
                if let Some(r) = node.on_telemetry(&tel) {
                    ep.send(&WireMessage::DetectionReport(r.clone()), addrs.control)
                        .map_err(CliError::env)?;
                    last_report = Some(r);
                }
            }
            None => {
                // Repeat the latest frame in case the controller started late.
                let current = ep.inbox().telemetry().map(|t| t.timestamp_ms);
                if let Some(r) = last_report
                    .as_ref()
                    .filter(|r| Some(r.timestamp_ms) == current)
                {
                    ep.send(&WireMessage::DetectionReport(r.clone()), addrs.control)
                        .map_err(CliError::env)?;
                }
            }
        }
    }
    Ok(EXIT_OK)
}

/// Controller side of the UDP link.
struct UdpLink {
    ep: Endpoint,
    robot: SocketAddr,
    telemetry: Telemetry,
    command_seq: u64,
    vision_enabled: bool,
    vision_seen: bool,
    vision_absent: bool,
    vision_misses: u32,
    period_ms: u64,
    next_frame_ms: u64,
    stop: Arc<AtomicBool>,
    log: TrajectoryLog,
}

impl UdpLink {
    fn connect(
        ep: Endpoint,
        robot: SocketAddr,
        scn: &Scenario,
        stop: Arc<AtomicBool>,
    ) -> Result<Self, ControlError> {
        let telemetry = ep
            .inbox()
            .wait_telemetry_after(None, STARTUP)
            .ok_or(ControlError::TelemetryLost)?;
        let mut link = Self {
            ep,
            robot,
            telemetry,
            command_seq: 0,
            vision_enabled: scn.sim.vision,
            vision_seen: false,
            vision_absent: false,
            vision_misses: 0,
            period_ms: ((scn.sim.vision_period * 1000.0).round() as u64).max(1),
            next_frame_ms: 0,
            stop,
            log: TrajectoryLog::default(),
        };
        link.await_frame();
        Ok(link)
    }

    /// At a frame time, waits for the matching report. Gives up on vision
    /// after a few silent frames when none has ever arrived.
    fn await_frame(&mut self) {
        let ts = self.telemetry.timestamp_ms;
        if !self.vision_enabled || ts < self.next_frame_ms {
            return;
        }
        while self.next_frame_ms <= ts {
            self.next_frame_ms += self.period_ms;
        }
        if self.vision_absent {
            return;
        }
        let timeout = if self.vision_seen {
            Duration::from_secs(1)
        } else {
            Duration::from_millis(300)
        };
        let got = self.ep.inbox().wait_for(timeout, |v| {
            v.report().filter(|r| r.timestamp_ms >= ts).map(|_| ())
        });
        if got.is_some() {
            self.vision_seen = true;
            self.vision_misses = 0;
        } else {
            self.vision_misses += 1;
            if !self.vision_seen && self.vision_misses >= 3 {
                eprintln!("control: no vision traffic, continuing on ultrasonic ranges");
                self.vision_absent = true;
            }
        }
    }

    fn t(&self) -> f64 {
        self.telemetry.timestamp_ms as f64 / 1000.0
    }
}

impl RobotInterface for UdpLink {
    fn send_command(&mut self, cmd: VelocityCommand) -> Result<(), ControlError> {
        if self.stop.load(Ordering::Relaxed) {
            return Err(ControlError::Interface("interrupted".into()));
        }
        self.command_seq += 1;
        let msg = WireMessage::Command(CommandMsg {
            seq: self.command_seq,
            timestamp_ms: self.telemetry.timestamp_ms,
            command: cmd,
        });
        let after = Some(self.telemetry.seq);
        let mut reply = None;
        for _ in 0..3 {
            self.ep
                .send(&msg, self.robot)
                .map_err(|e| ControlError::Interface(e.to_string()))?;
            reply = self.ep.inbox().wait_telemetry_after(after, TELEMETRY_STALE);
            if reply.is_some() {
                break;
            }
        }
        self.telemetry = reply.ok_or(ControlError::TelemetryLost)?;
        self.await_frame();
        Ok(())
    }

    fn latest_telemetry(&mut self) -> Result<Telemetry, ControlError> {
        Ok(self.telemetry)
    }

    fn latest_report(&mut self) -> Option<DetectionReport> {
        self.ep.inbox().report()
    }

    fn record(&mut self, event: &ControlEvent) {
        let t = self.t();
        match event {
            ControlEvent::Mode(m) => {
                eprintln!("control: t={t:.2} mode {m}");
                self.log.transitions.push(Transition {
                    t,
                    mode: m.label().to_string(),
                });
            }
            ControlEvent::Event { kind, detail } => {
                eprintln!("control: t={t:.2} {} {detail}", kind.label());
                self.log.events.push(LogEvent {
                    t,
                    kind: *kind,
                    detail: detail.clone(),
                });
            }
            ControlEvent::FrontBlocked(_) => {}
        }
    }
}

fn serve_control(
    scn: &Scenario,
    ep: Endpoint,
    addrs: &EndpointConfig,
    stop: Arc<AtomicBool>,
    args: &ServeArgs,
) -> Result<u8, CliError> {
    let mut link = match UdpLink::connect(ep, addrs.robot, scn, stop.clone()) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("control: {e}");
            return Ok(EXIT_FAILED);
        }
    };
    let mut ctl = Controller::new(scn.control_config());
    let mut all_arrived = true;
    let mut failed = false;
    for &target in &scn.targets {
        match ctl.send_to(target, &mut link) {
            Ok(SendOutcome::Arrived) => {}
            Ok(SendOutcome::Unreachable) => all_arrived = false,
            Err(e) => {
                eprintln!("control: {e}");
                all_arrived = false;
                failed = true;
                break;
            }
        }
    }
    if args.listen_targets && !failed {
        let mut last = None;
        while !stop.load(Ordering::Relaxed) {
            let Some(req) = link.ep.inbox().wait_target_after(last, POLL) else {
                continue;
            };
            last = Some(req.seq);
            match ctl.send_to(req.target(), &mut link) {
                Ok(SendOutcome::Arrived) => {}
                Ok(SendOutcome::Unreachable) => all_arrived = false,
                Err(e) => {
                    eprintln!("control: {e}");
                    all_arrived = false;
                    break;
                }
            }
        }
    }

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(CliError::env)?;
    let csv_err = |e: csv::Error| CliError::env(anyhow!(e));
    fs::write(
        args.out.join("transitions.csv"),
        link.log.transitions_csv().map_err(csv_err)?,
    )
    .context("writing transitions.csv")
    .map_err(CliError::env)?;
    fs::write(
        args.out.join("events.csv"),
        link.log.events_csv().map_err(csv_err)?,
    )
    .context("writing events.csv")
    .map_err(CliError::env)?;
    Ok(if all_arrived { EXIT_OK } else { EXIT_FAILED })
}
