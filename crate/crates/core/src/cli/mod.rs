//! Command-line front end: `run`, `plot`, `repl` and `serve`.
//!
//! Exit codes: 0 every target reached, 1 a target unreachable or the run
//! failed, 2 bad input, 3 environment trouble such as an unbindable port.

mod repl;
mod run;
mod serve;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::protocol::udp::{
    parse_addr, EndpointConfig, ENV_CONTROL_ADDR, ENV_ROBOT_ADDR, ENV_VISION_ADDR,
};
use crate::sim::{load_scenario, Scenario};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_ENV: u8 = 3;

/// An error tagged with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }

    pub fn env(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_ENV,
            error: error.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "losnav",
    version,
    about = "Line-of-sight navigation simulator and UDP roles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario in virtual time and write logs.
    Run(RunArgs),
    /// Render a trajectory CSV as SVG.
    Plot(PlotArgs),
    /// Interactive session: send targets and inject detections.
    Repl(ReplArgs),
    /// Run one role of the split-process setup over UDP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    /// Also write plot.svg.
    #[arg(long)]
    pub plot: bool,
    /// Output directory for logs.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the control tick, seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Pace the simulation to wall-clock time.
    #[arg(long)]
    pub real_time: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    pub scenario: PathBuf,
    /// Trajectory CSV written by `run`.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Events CSV written by `run`.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Output SVG path.
    #[arg(long, default_value = "plot.svg")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct AddrArgs {
    #[arg(long, env = ENV_VISION_ADDR, value_parser = parse_socket)]
    pub vision_addr: Option<SocketAddr>,
    #[arg(long, env = ENV_CONTROL_ADDR, value_parser = parse_socket)]
    pub control_addr: Option<SocketAddr>,
    #[arg(long, env = ENV_ROBOT_ADDR, value_parser = parse_socket)]
    pub robot_addr: Option<SocketAddr>,
}

impl AddrArgs {
    pub fn endpoints(&self) -> EndpointConfig {
        let mut cfg = EndpointConfig::default();
        if let Some(a) = self.vision_addr {
            cfg.vision = a;
        }
        if let Some(a) = self.control_addr {
            cfg.control = a;
        }
        if let Some(a) = self.robot_addr {
            cfg.robot = a;
        }
        cfg
    }
}

fn parse_socket(s: &str) -> Result<SocketAddr, String> {
    parse_addr(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct ReplArgs {
    /// World to simulate behind the session; an open arena when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Talk to a running control role over UDP instead of simulating.
    #[arg(long)]
    pub udp: bool,
    #[command(flatten)]
    pub addrs: AddrArgs,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Role {
    Vision,
    Control,
    Robot,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(value_enum)]
    pub role: Role,
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub addrs: AddrArgs,
    /// Output directory for the control role's logs.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Exit after this many seconds without traffic once traffic has started.
    #[arg(long)]
    pub idle_exit: Option<f64>,
    /// Control role: keep serving target requests after the scenario targets.
    #[arg(long)]
    pub listen_targets: bool,
}

/// Loads a scenario and applies command-line overrides.
pub fn scenario_with_overrides(
    path: &PathBuf,
    seed: Option<u64>,
    dt: Option<f64>,
) -> Result<Scenario, CliError> {
    let mut scn = load_scenario(path)
        .map_err(|e| CliError::input(anyhow::Error::new(e).context(path.display().to_string())))?;
    if let Some(s) = seed {
        scn.seed = s;
    }
    if let Some(dt) = dt {
        scn.sim.dt = dt;
        scn.validate().map_err(CliError::input)?;
    }
    Ok(scn)
}

pub fn execute(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Run(a) => run::cmd_run(&a),
        Command::Plot(a) => run::cmd_plot(&a),
        Command::Repl(a) => repl::cmd_repl(&a),
        Command::Serve(a) => serve::cmd_serve(&a),
    }
}

/// Entry point used by the binary.
pub fn main_from_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
