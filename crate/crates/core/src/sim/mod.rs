//! Deterministic virtual-time simulation: scenario files, the robot and
//! vision nodes, the in-process link the controller drives, logs and plots.

mod link;
mod log;
mod nodes;
pub mod oracle;
mod plot;
mod scenario;

use serde::{Deserialize, Serialize};

use crate::controller::{ControlConfig, ControlError, Controller, SendOutcome};
use crate::geometry::{distance, Vec2};
use crate::perception::{CameraConfig, ProximityConfig, ZoneConfig};
use crate::world::{line_of_sight, MotionLimits, SensorConfig, WorldModel};

pub use link::{InProcessLink, LinkOptions, LinkStatus};
pub use log::{read_events_csv, read_trajectory_csv, LogEvent, LogRow, TrajectoryLog, Transition};
pub use nodes::{ms_at, RobotNode, StepError, VisionNode};
pub use plot::render_plot;
pub use scenario::{load_scenario, parse_scenario, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Control tick, seconds.
    pub dt: f64,
    /// Interval between detection reports, seconds.
    pub vision_period: f64,
    /// Probability that a detection report is dropped in transit.
    pub report_loss: f64,
    /// Virtual time after which the run is abandoned, seconds.
    pub max_time: f64,
    /// Whether a vision node runs at all.
    pub vision: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            vision_period: 0.2,
            report_loss: 0.0,
            max_time: 7200.0,
            vision: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub world: WorldModel,
    pub targets: Vec<Vec2>,
    pub control: ControlConfig,
    pub zones: ZoneConfig,
    pub proximity: ProximityConfig,
    pub camera: CameraConfig,
    pub sensor: SensorConfig,
    pub limits: MotionLimits,
    pub sim: SimConfig,
    pub seed: u64,
    pub label: String,
}

impl Scenario {
    /// Default configuration around `world`, with no targets.
    pub fn new(world: WorldModel) -> Self {
        Self {
            world,
            targets: Vec::new(),
            control: ControlConfig::default(),
            zones: ZoneConfig::default(),
            proximity: ProximityConfig::default(),
            camera: CameraConfig::default(),
            sensor: SensorConfig::default(),
            limits: MotionLimits::default(),
            sim: SimConfig::default(),
            seed: 0,
            label: String::new(),
        }
    }

    /// Controller settings with the tick tied to the simulation step.
    pub fn control_config(&self) -> ControlConfig {
        ControlConfig {
            tick: self.sim.dt,
            ..self.control
        }
    }

    /// Device closest to `target`, the one a leg toward `target` serves.
    pub fn active_device(&self, target: Vec2) -> Option<usize> {
        self.world
            .devices
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                distance(a.position, target).total_cmp(&distance(b.position, target))
            })
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegOutcome {
    Arrived,
    Unreachable,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub log: TrajectoryLog,
    pub legs: Vec<LegOutcome>,
    pub collided: bool,
    /// Final pose of the robot body.
    pub final_position: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub arrived: usize,
    pub legs: usize,
    pub final_error: f64,
    pub path_length: f64,
    pub min_clearance: f64,
    pub los_to_device: Option<bool>,
    pub duration: f64,
}

impl RunResult {
    pub fn all_arrived(&self) -> bool {
        !self.collided
            && !self.legs.is_empty()
            && self.legs.iter().all(|l| *l == LegOutcome::Arrived)
    }

    pub fn summary(&self, scn: &Scenario) -> RunSummary {
        let last_target = scn.targets.last().copied().unwrap_or(self.final_position);
        let los_to_device = scn.active_device(last_target).map(|i| {
            line_of_sight(
                self.final_position,
                scn.world.devices[i].position,
                &scn.world,
            )
        });
        RunSummary {
            arrived: self
                .legs
                .iter()
                .filter(|l| **l == LegOutcome::Arrived)
                .count(),
            legs: scn.targets.len(),
            final_error: distance(self.final_position, last_target),
            path_length: self.log.path_length(),
            min_clearance: self.log.min_clearance,
            los_to_device,
            duration: self.log.rows.last().map_or(0.0, |r| r.t),
        }
    }
}

/// Runs every target of `scn` in order in virtual time. An unreachable leg
/// does not stop the run; a collision or an interface failure does.
pub fn run(scn: &Scenario) -> RunResult {
    run_with(scn, LinkOptions::default())
}

pub fn run_with(scn: &Scenario, options: LinkOptions) -> RunResult {
    let mut link = InProcessLink::new(scn, options);
    let mut ctl = Controller::new(scn.control_config());
    let mut legs = Vec::with_capacity(scn.targets.len());
    for &target in &scn.targets {
        link.set_target(target);
        match ctl.send_to(target, &mut link) {
            Ok(SendOutcome::Arrived) => legs.push(LegOutcome::Arrived),
            Ok(SendOutcome::Unreachable) => legs.push(LegOutcome::Unreachable),
            Err(ControlError::Collision) | Err(_) => {
                legs.push(LegOutcome::Failed);
                break;
            }
        }
    }
    let collided = link.collided();
    let final_position = link.robot().world().mrp.position;
    RunResult {
        log: link.into_log(),
        legs,
        collided,
        final_position,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG: &str =
        "bounds -1.5 -1.5 6.5 6.5\nmrp 0 0 0 0.15\nrect 2 2 3 3\ntarget 5 5\ntarget 0 0\nseed 3\n";

    #[test]
    fn empty_world_arrives() {
        let scn = parse_scenario("bounds -1.5 -1.5 6.5 6.5\nmrp 0 0 0 0.15\ntarget 5 5\n").unwrap();
        let r = run(&scn);
        assert_eq!(r.legs, vec![LegOutcome::Arrived]);
        let s = r.summary(&scn);
        assert!(s.final_error <= 0.1);
        assert!(s.path_length <= 1.02 * 50f64.sqrt());
    }

    #[test]
    fn back_and_forth_with_box() {
        let scn = parse_scenario(FIG).unwrap();
        let r = run(&scn);
        assert!(r.all_arrived(), "{:?}", r.legs);
        assert!(!r.collided);
        assert!(r.log.min_clearance > 0.0);
    }

    #[test]
    fn run_is_reproducible() {
        let mut scn = parse_scenario(FIG).unwrap();
        scn.sim.report_loss = 0.3;
        let a = run(&scn).log.trajectory_csv().unwrap();
        let b = run(&scn).log.trajectory_csv().unwrap();
        assert_eq!(a, b);
    }
}
