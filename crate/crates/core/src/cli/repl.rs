//! Line-oriented operator session. Targets and synthetic detections are
//! encoded as protocol messages and handed to the controller's mailbox, the
//! same path that camera reports and target requests take.

use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use anyhow::anyhow;

use super::{CliError, ReplArgs, EXIT_OK};
use crate::controller::{Controller, SendOutcome};
use crate::geometry::{Pose2D, Vec2};
use crate::perception::{Detection, DetectionReport, ObjectKind, Zone};
use crate::protocol::udp::Endpoint;
use crate::protocol::{encode, Inbox, TargetRequest, WireMessage};
use crate::sim::{load_scenario, InProcessLink, LinkOptions, LinkStatus, Scenario};
use crate::world::{Aabb, WorldModel};

pub const USAGE: &str =
    "commands: target X Y | obstacle front|left|right [DIST] | clear | state | wait SECONDS | quit";
const DEFAULT_OBSTACLE_DISTANCE: f64 = 0.4;
const POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, PartialEq)]
pub enum ReplCommand {
    Target(Vec2),
    Obstacle(Zone, f64),
    Clear,
    State,
    Wait(f64),
    Quit,
}

pub fn parse_line(line: &str) -> Result<Option<ReplCommand>, String> {
    let words: Vec<&str> = line.split_whitespace().collect();
    let num = |s: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("not a number: {s}"))
    };
    let cmd = match words.as_slice() {
        [] => return Ok(None),
        ["target", x, y] => ReplCommand::Target(Vec2::new(num(x)?, num(y)?)),
        ["obstacle", zone, rest @ ..] if rest.len() <= 1 => {
            let zone = match *zone {
                "front" => Zone::Front,
                "left" => Zone::Left,
                "right" => Zone::Right,
                other => return Err(format!("unknown zone: {other}")),
            };
            let d = match rest.first() {
                Some(s) => num(s)?,
                None => DEFAULT_OBSTACLE_DISTANCE,
            };
            if d < 0.0 {
                return Err("distance must be non-negative".into());
            }
            ReplCommand::Obstacle(zone, d)
        }
        ["clear"] => ReplCommand::Clear,
        ["state"] => ReplCommand::State,
        ["wait", s] => {
            let s = num(s)?;
            if s < 0.0 {
                return Err("wait must be non-negative".into());
            }
            ReplCommand::Wait(s)
        }
        ["quit"] | ["exit"] => ReplCommand::Quit,
        _ => return Err(format!("unrecognised: {}", line.trim())),
    };
    Ok(Some(cmd))
}

/// The report an operator injection stands for. A camera report with the
/// same content encodes to the same bytes.
pub fn injected_report(
    seq: u64,
    timestamp_ms: u64,
    obstacle: Option<(Zone, f64)>,
    threshold: f64,
) -> DetectionReport {
    let detections = obstacle
        .map(|(zone, d)| Detection {
            kind: ObjectKind::Obstacle,
            zone,
            est_distance: Some(d),
            close: d <= threshold,
            source_id: "operator".into(),
        })
        .into_iter()
        .collect();
    DetectionReport {
        seq,
        timestamp_ms,
        detections,
    }
}

/// Where injected messages go.
enum Backend {
    Local {
        inbox: Arc<Inbox>,
        status: Arc<Mutex<LinkStatus>>,
        cancel: Arc<AtomicBool>,
        worker: Option<JoinHandle<()>>,
    },
    Udp {
        ep: Endpoint,
        control: SocketAddr,
    },
}

impl Backend {
    fn deliver(&self, msg: &WireMessage) -> Result<(), String> {
        match self {
            Backend::Local { inbox, .. } => {
                let bytes = encode(msg).map_err(|e| e.to_string())?;
                inbox.offer_bytes(&bytes);
                Ok(())
            }
            Backend::Udp { ep, control } => ep.send(msg, *control).map_err(|e| e.to_string()),
        }
    }

    fn now_ms(&self) -> u64 {
        match self {
            Backend::Local { status, .. } => {
                (status.lock().map(|s| s.t).unwrap_or(0.0) * 1000.0).round() as u64
            }
            Backend::Udp { .. } => 0,
        }
    }
}

impl Drop for Backend {
    fn drop(&mut self) {
        if let Backend::Local { cancel, worker, .. } = self {
            cancel.store(true, Ordering::Relaxed);
            if let Some(w) = worker.take() {
                let _ = w.join();
            }
        }
    }
}

/// Runs the controller against the simulated robot, serving target
/// requests as they arrive in the shared mailbox.
fn spawn_local(scn: Scenario, speed: f64) -> Backend {
    let inbox = Arc::new(Inbox::new());
    let status = Arc::new(Mutex::new(LinkStatus::default()));
    let cancel = Arc::new(AtomicBool::new(false));
    let options = LinkOptions {
        pace: Some(Duration::from_secs_f64(scn.sim.dt / speed)),
        inbox: Some(inbox.clone()),
        status: Some(status.clone()),
        cancel: Some(cancel.clone()),
    };
    let (inbox2, cancel2) = (inbox.clone(), cancel.clone());
    let worker = thread::spawn(move || {
        let mut link = InProcessLink::new(&scn, options);
        let mut ctl = Controller::new(scn.control_config());
        let mut last = None;
        while !cancel2.load(Ordering::Relaxed) {
            let Some(req) = inbox2.wait_target_after(last, POLL) else {
                continue;
            };
            last = Some(req.seq);
            link.set_target(req.target());
            match ctl.send_to(req.target(), &mut link) {
                Ok(SendOutcome::Arrived | SendOutcome::Unreachable) => {}
                Err(_) if cancel2.load(Ordering::Relaxed) => break,
                Err(e) => {
                    eprintln!("controller stopped: {e}");
                    break;
                }
            }
        }
    });
    Backend::Local {
        inbox,
        status,
        cancel,
        worker: Some(worker),
    }
}

fn open_arena() -> Scenario {
    let world = WorldModel::new(
        Aabb::new(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0)),
        Pose2D::new(0.0, 0.0, 0.0),
        0.15,
    );
    let mut scn = Scenario::new(world);
    scn.label = "open arena".into();
    scn
}

fn describe(s: &LinkStatus) -> String {
    let target = s
        .controller
        .target
        .map(|t| format!("({:.3}, {:.3})", t.x, t.y))
        .unwrap_or_else(|| "-".into());
    format!(
        "t={:.2} pose=({:.3}, {:.3}, {:.1}deg) mode={} target={} recursion={} avoid={} front_blocked={}",
        s.t,
        s.pose.position.x,
        s.pose.position.y,
        s.pose.heading.to_degrees(),
        s.controller.mode,
        target,
        s.controller.recursion_depth,
        s.controller.avoid_depth,
        s.front_blocked
    )
}

struct Session {
    backend: Backend,
    threshold: f64,
    target_seq: u64,
    report_seq: u64,
    events_shown: usize,
}

impl Session {
    /// Prints controller events logged since the previous call.
    fn flush_events(&mut self, out: &mut impl Write) -> io::Result<()> {
        if let Backend::Local { status, .. } = &self.backend {
            let fresh: Vec<_> = status
                .lock()
                .map(|s| s.events.iter().skip(self.events_shown).cloned().collect())
                .unwrap_or_default();
            for e in &fresh {
                writeln!(out, "event t={:.2} {} {}", e.t, e.kind.label(), e.detail)?;
            }
            self.events_shown += fresh.len();
        }
        Ok(())
    }

    fn handle(&mut self, cmd: ReplCommand, out: &mut impl Write) -> io::Result<bool> {
        match cmd {
            ReplCommand::Target(p) => {
                self.target_seq += 1;
                let msg = WireMessage::TargetRequest(TargetRequest {
                    seq: self.target_seq,
                    timestamp_ms: self.backend.now_ms(),
                    x: p.x,
                    y: p.y,
                });
                self.send(&msg, out)?;
            }
            ReplCommand::Obstacle(zone, d) => {
                self.report_seq += 1;
                let r = injected_report(
                    self.report_seq,
                    self.backend.now_ms(),
                    Some((zone, d)),
                    self.threshold,
                );
                self.send(&WireMessage::DetectionReport(r), out)?;
            }
            ReplCommand::Clear => {
                self.report_seq += 1;
                let r =
                    injected_report(self.report_seq, self.backend.now_ms(), None, self.threshold);
                self.send(&WireMessage::DetectionReport(r), out)?;
            }
            ReplCommand::State => match &self.backend {
                Backend::Local { status, .. } => {
                    let s = status.lock().map(|s| s.clone()).unwrap_or_default();
                    writeln!(out, "{}", describe(&s))?;
                }
                Backend::Udp { control, .. } => writeln!(
                    out,
                    "state is not visible over UDP; see the control role at {control}"
                )?,
            },
            ReplCommand::Wait(s) => thread::sleep(Duration::from_secs_f64(s)),
            ReplCommand::Quit => return Ok(false),
        }
        self.flush_events(out)?;
        Ok(true)
    }

    fn send(&self, msg: &WireMessage, out: &mut impl Write) -> io::Result<()> {
        match self.backend.deliver(msg) {
            Ok(()) => writeln!(
                out,
                "sent {} seq={}",
                msg.message_type().as_str(),
                msg.seq()
            ),
            Err(e) => writeln!(out, "send failed: {e}"),
        }
    }
}

/// Drives a session from `input` until `quit` or end of input.
fn drive(mut session: Session, input: impl BufRead, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "{USAGE}")?;
    for line in input.lines() {
        let line = line?;
        match parse_line(&line) {
            Ok(None) => session.flush_events(out)?,
            Ok(Some(cmd)) => {
                if !session.handle(cmd, out)? {
                    break;
                }
            }
            Err(e) => writeln!(out, "{e}\n{USAGE}")?,
        }
        out.flush()?;
    }
    Ok(())
}

pub fn cmd_repl(args: &ReplArgs) -> Result<u8, CliError> {
    if !(args.speed.is_finite() && args.speed > 0.0) {
        return Err(CliError::input(anyhow!("--speed must be positive")));
    }
    let scn = match &args.scenario {
        Some(p) => load_scenario(p)
            .map_err(|e| CliError::input(anyhow::Error::new(e).context(p.display().to_string())))?,
        None => open_arena(),
    };
    let threshold = scn.proximity.obstacle_threshold;
    let backend = if args.udp {
        let ep =
            Endpoint::bind_addr(SocketAddr::from(([127, 0, 0, 1], 0))).map_err(CliError::env)?;
        Backend::Udp {
            ep,
            control: args.addrs.endpoints().control,
        }
    } else {
        // The operator stands in for the camera, so the simulated one is off.
        let mut scn = scn;
        scn.sim.vision = false;
        spawn_local(scn, args.speed)
    };
    let session = Session {
        backend,
        threshold,
        target_seq: 0,
        report_seq: 0,
        events_shown: 0,
    };
    let stdin = io::stdin();
    let mut stdout = io::stdout();
    drive(session, stdin.lock(), &mut stdout).map_err(CliError::env)?;
    Ok(EXIT_OK)
}
