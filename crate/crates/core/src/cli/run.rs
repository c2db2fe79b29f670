use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::Context;

use super::{scenario_with_overrides, CliError, PlotArgs, RunArgs, EXIT_FAILED, EXIT_OK};
use crate::sim::{
    load_scenario, read_events_csv, read_trajectory_csv, render_plot, run_with, LinkOptions,
};

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::env)
}

pub fn cmd_run(args: &RunArgs) -> Result<u8, CliError> {
    let scn = scenario_with_overrides(&args.scenario, args.seed, args.dt)?;
    let options = LinkOptions {
        pace: args.real_time.then(|| Duration::from_secs_f64(scn.sim.dt)),
        ..Default::default()
    };
    let result = run_with(&scn, options);

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(CliError::env)?;
    let csv_err = |e: csv::Error| CliError::env(anyhow::Error::new(e));
    write(
        &args.out.join("trajectory.csv"),
        &result.log.trajectory_csv().map_err(csv_err)?,
    )?;
    write(
        &args.out.join("events.csv"),
        &result.log.events_csv().map_err(csv_err)?,
    )?;
    write(
        &args.out.join("transitions.csv"),
        &result.log.transitions_csv().map_err(csv_err)?,
    )?;
    if args.plot {
        write(
            &args.out.join("plot.svg"),
            &render_plot(&result.log.rows, &result.log.events, &scn),
        )?;
    }

    let s = result.summary(&scn);
    println!(
        "scenario:      {}",
        if scn.label.is_empty() {
            "-"
        } else {
            &scn.label
        }
    );
    println!("legs arrived:  {}/{}", s.arrived, s.legs);
    for (i, leg) in result.legs.iter().enumerate() {
        println!("  leg {}: {:?}", i + 1, leg);
    }
    println!("final error:   {:.4} m", s.final_error);
    println!("path length:   {:.4} m", s.path_length);
    println!("min clearance: {:.4} m", s.min_clearance);
    println!("collision:     {}", result.collided);
    match s.los_to_device {
        Some(los) => println!("LoS to device: {los}"),
        None => println!("LoS to device: n/a"),
    }
    println!("sim time:      {:.2} s", s.duration);
    Ok(if result.all_arrived() {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

pub fn cmd_plot(args: &PlotArgs) -> Result<u8, CliError> {
    let scn = load_scenario(&args.scenario).map_err(|e| {
        CliError::input(anyhow::Error::new(e).context(args.scenario.display().to_string()))
    })?;
    let open = |p: &Path| {
        fs::File::open(p)
            .with_context(|| format!("opening {}", p.display()))
            .map_err(CliError::input)
    };
    let rows = read_trajectory_csv(open(&args.trajectory)?)
        .with_context(|| format!("parsing {}", args.trajectory.display()))
        .map_err(CliError::input)?;
    if rows.is_empty() {
        return Err(CliError::input(anyhow::anyhow!(
            "{} holds no rows",
            args.trajectory.display()
        )));
    }
    let events = match &args.events {
        Some(p) => read_events_csv(open(p)?)
            .with_context(|| format!("parsing {}", p.display()))
            .map_err(CliError::input)?,
        None => Vec::new(),
    };
    write(&args.out, &render_plot(&rows, &events, &scn))?;
    Ok(EXIT_OK)
}
