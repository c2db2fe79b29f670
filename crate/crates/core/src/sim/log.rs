use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::controller::EventKind;
use crate::geometry::{distance, Vec2};

/// One control tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub us_left: f64,
    pub us_front: f64,
    pub us_right: f64,
    pub mode: String,
    pub front_blocked: bool,
    pub los_to_active_device: Option<bool>,
    pub clearance: f64,
}

impl LogRow {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub t: f64,
    pub kind: EventKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub t: f64,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
    pub events: Vec<LogEvent>,
    pub transitions: Vec<Transition>,
    pub min_clearance: f64,
}

fn to_csv<T: Serialize>(items: &[T], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for item in items {
        w.serialize(item)?;
    }
    w.flush()?;
    Ok(())
}

fn to_csv_string<T: Serialize>(items: &[T], header: &str) -> csv::Result<String> {
    let mut buf = Vec::new();
    if items.is_empty() {
        buf.extend_from_slice(header.as_bytes());
        buf.push(b'\n');
    } else {
        to_csv(items, &mut buf)?;
    }
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

const TRAJECTORY_HEADER: &str =
    "t,x,y,theta,v,omega,us_left,us_front,us_right,mode,front_blocked,los_to_active_device,clearance";
const EVENTS_HEADER: &str = "t,kind,detail";
const TRANSITIONS_HEADER: &str = "t,mode";

impl TrajectoryLog {
    pub fn trajectory_csv(&self) -> csv::Result<String> {
        to_csv_string(&self.rows, TRAJECTORY_HEADER)
    }

    pub fn events_csv(&self) -> csv::Result<String> {
        to_csv_string(&self.events, EVENTS_HEADER)
    }

    pub fn transitions_csv(&self) -> csv::Result<String> {
        to_csv_string(&self.transitions, TRANSITIONS_HEADER)
    }

    pub fn path_length(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| distance(w[0].position(), w[1].position()))
            .sum()
    }

    pub fn event_kinds(&self) -> Vec<EventKind> {
        self.events.iter().map(|e| e.kind).collect()
    }

    pub fn mode_sequence(&self) -> Vec<String> {
        self.transitions.iter().map(|t| t.mode.clone()).collect()
    }
}

pub fn read_trajectory_csv(input: impl Read) -> csv::Result<Vec<LogRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn read_events_csv(input: impl Read) -> csv::Result<Vec<LogEvent>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
