//! Wire format for the messages exchanged between the vision, control,
//! robot and target roles.
//!
//! Every datagram carries exactly one message: a JSON object with the keys
//! `payload`, `seq`, `timestamp_ms` and `type`. Encoding is canonical: keys
//! are sorted, there is no whitespace, and every float is rounded to nine
//! significant digits before being rendered in its shortest form. Two equal
//! messages therefore always produce the same bytes.

mod inbox;
pub mod udp;

use std::f64::consts::PI;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::geometry::{Pose2D, Vec2};
use crate::perception::{Detection, DetectionReport};
use crate::world::{UltrasonicReading, VelocityCommand};

pub use inbox::{Inbox, InboxCounters};

/// Largest datagram either side will produce or accept.
pub const MAX_DATAGRAM: usize = 1400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("encoded message is {0} bytes, limit is {MAX_DATAGRAM}")]
    MessageTooLarge(usize),
    #[error("message violates its invariants: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("malformed datagram: {0}")]
    Malformed(String),
    #[error("invalid message: {0}")]
    Invalid(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseField {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityField {
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuField {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

/// Robot state snapshot sent to the controller every control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Telemetry {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub pose: PoseField,
    pub velocity: VelocityField,
    pub imu: ImuField,
    pub ultrasonic: UltrasonicReading,
}

impl Telemetry {
    pub fn pose2d(&self) -> Pose2D {
        Pose2D::new(self.pose.x, self.pose.y, self.pose.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandMsg {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub command: VelocityCommand,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetRequest {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub x: f64,
    pub y: f64,
}

impl TargetRequest {
    pub fn target(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    DetectionReport(DetectionReport),
    Telemetry(Telemetry),
    Command(CommandMsg),
    TargetRequest(TargetRequest),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    DetectionReport,
    Telemetry,
    Command,
    TargetRequest,
}

impl MessageType {
    pub const ALL: [MessageType; 4] = [
        MessageType::DetectionReport,
        MessageType::Telemetry,
        MessageType::Command,
        MessageType::TargetRequest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageType::DetectionReport => "detection_report",
            MessageType::Telemetry => "telemetry",
            MessageType::Command => "command",
            MessageType::TargetRequest => "target_request",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

// Payload shapes on the wire.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportPayload {
    detections: Vec<Detection>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TelemetryPayload {
    pose: PoseField,
    velocity: VelocityField,
    imu: ImuField,
    ultrasonic: UltrasonicPayload,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UltrasonicPayload {
    left: f64,
    front: f64,
    right: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandPayload {
    linear: f64,
    angular: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetPayload {
    x: f64,
    y: f64,
}

/// Rounds to nine significant digits, the precision carried on the wire.
pub fn quantize(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

impl WireMessage {
    pub fn message_type(&self) -> MessageType {
        match self {
            WireMessage::DetectionReport(_) => MessageType::DetectionReport,
            WireMessage::Telemetry(_) => MessageType::Telemetry,
            WireMessage::Command(_) => MessageType::Command,
            WireMessage::TargetRequest(_) => MessageType::TargetRequest,
        }
    }

    pub fn seq(&self) -> u64 {
        match self {
            WireMessage::DetectionReport(m) => m.seq,
            WireMessage::Telemetry(m) => m.seq,
            WireMessage::Command(m) => m.seq,
            WireMessage::TargetRequest(m) => m.seq,
        }
    }

    pub fn timestamp_ms(&self) -> u64 {
        match self {
            WireMessage::DetectionReport(m) => m.timestamp_ms,
            WireMessage::Telemetry(m) => m.timestamp_ms,
            WireMessage::Command(m) => m.timestamp_ms,
            WireMessage::TargetRequest(m) => m.timestamp_ms,
        }
    }

    /// The message as it will look after a trip over the wire.
    pub fn canonical(&self) -> WireMessage {
        let q = quantize;
        match self {
            WireMessage::DetectionReport(r) => WireMessage::DetectionReport(DetectionReport {
                detections: r
                    .detections
                    .iter()
                    .map(|d| Detection {
                        est_distance: d.est_distance.map(q),
                        ..d.clone()
                    })
                    .collect(),
                ..r.clone()
            }),
            WireMessage::Telemetry(t) => WireMessage::Telemetry(Telemetry {
                pose: PoseField {
                    x: q(t.pose.x),
                    y: q(t.pose.y),
                    theta: q(t.pose.theta),
                },
                velocity: VelocityField {
                    v: q(t.velocity.v),
                    omega: q(t.velocity.omega),
                },
                imu: ImuField {
                    yaw: q(t.imu.yaw),
                    pitch: q(t.imu.pitch),
                    roll: q(t.imu.roll),
                },
                ultrasonic: UltrasonicReading {
                    left: q(t.ultrasonic.left),
                    front: q(t.ultrasonic.front),
                    right: q(t.ultrasonic.right),
                },
                ..*t
            }),
            WireMessage::Command(c) => WireMessage::Command(CommandMsg {
                command: VelocityCommand {
                    linear: q(c.command.linear),
                    angular: q(c.command.angular),
                },
                ..*c
            }),
            WireMessage::TargetRequest(t) => WireMessage::TargetRequest(TargetRequest {
                x: q(t.x),
                y: q(t.y),
                ..*t
            }),
        }
    }

    fn validate(&self) -> Result<(), String> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} is not finite"))
            }
        };
        let angle = |name: &str, v: f64| {
            finite(name, v)?;
            if v > -PI && v <= PI {
                Ok(())
            } else {
                Err(format!("{name} = {v} is outside (-pi, pi]"))
            }
        };
        match self {
            WireMessage::DetectionReport(r) => {
                for d in &r.detections {
                    match d.est_distance {
                        Some(e) if !(e.is_finite() && e >= 0.0) => {
                            return Err(format!("est_distance {e} must be finite and non-negative"))
                        }
                        None if d.close => {
                            return Err("close detection without est_distance".into())
                        }
                        _ => {}
                    }
                }
            }
            WireMessage::Telemetry(t) => {
                finite("pose.x", t.pose.x)?;
                finite("pose.y", t.pose.y)?;
                angle("pose.theta", t.pose.theta)?;
                finite("velocity.v", t.velocity.v)?;
                finite("velocity.omega", t.velocity.omega)?;
                angle("imu.yaw", t.imu.yaw)?;
                angle("imu.pitch", t.imu.pitch)?;
                angle("imu.roll", t.imu.roll)?;
                for (name, v) in [
                    ("ultrasonic.left", t.ultrasonic.left),
                    ("ultrasonic.front", t.ultrasonic.front),
                    ("ultrasonic.right", t.ultrasonic.right),
                ] {
                    finite(name, v)?;
                    if v < 0.0 {
                        return Err(format!("{name} = {v} is negative"));
                    }
                }
            }
            WireMessage::Command(c) => {
                finite("linear", c.command.linear)?;
                finite("angular", c.command.angular)?;
            }
            WireMessage::TargetRequest(t) => {
                finite("x", t.x)?;
                finite("y", t.y)?;
            }
        }
        Ok(())
    }

    fn payload(&self) -> Value {
        let v = match self {
            WireMessage::DetectionReport(r) => serde_json::to_value(ReportPayload {
                detections: r.detections.clone(),
            }),
            WireMessage::Telemetry(t) => serde_json::to_value(TelemetryPayload {
                pose: t.pose,
                velocity: t.velocity,
                imu: t.imu,
                ultrasonic: UltrasonicPayload {
                    left: t.ultrasonic.left,
                    front: t.ultrasonic.front,
                    right: t.ultrasonic.right,
                },
            }),
            WireMessage::Command(c) => serde_json::to_value(CommandPayload {
                linear: c.command.linear,
                angular: c.command.angular,
            }),
            WireMessage::TargetRequest(t) => serde_json::to_value(TargetPayload { x: t.x, y: t.y }),
        };
        v.expect("payload types always serialize")
    }
}

fn quantize_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let q = quantize(n.as_f64().expect("f64 number"));
            *v = serde_json::Number::from_f64(q)
                .map(Value::Number)
                .unwrap_or(Value::Null);
        }
        Value::Array(items) => items.iter_mut().for_each(quantize_value),
        Value::Object(map) => map.values_mut().for_each(quantize_value),
        _ => {}
    }
}

pub fn encode(msg: &WireMessage) -> Result<Vec<u8>, EncodeError> {
    msg.validate().map_err(EncodeError::Invalid)?;
    let mut payload = msg.payload();
    quantize_value(&mut payload);
    let mut envelope = Map::new();
    envelope.insert("payload".into(), payload);
    envelope.insert("seq".into(), Value::from(msg.seq()));
    envelope.insert("timestamp_ms".into(), Value::from(msg.timestamp_ms()));
    envelope.insert("type".into(), Value::from(msg.message_type().as_str()));
    let bytes = serde_json::to_vec(&Value::Object(envelope)).expect("json values always serialize");
    if bytes.len() > MAX_DATAGRAM {
        return Err(EncodeError::MessageTooLarge(bytes.len()));
    }
    Ok(bytes)
}

fn take_u64(map: &mut Map<String, Value>, key: &str) -> Result<u64, DecodeError> {
    map.remove(key)
        .ok_or_else(|| DecodeError::Malformed(format!("missing field `{key}`")))?
        .as_u64()
        .ok_or_else(|| DecodeError::Malformed(format!("`{key}` must be a non-negative integer")))
}

fn payload_as<T: DeserializeOwned>(v: Value) -> Result<T, DecodeError> {
    serde_json::from_value(v).map_err(|e| DecodeError::Malformed(format!("payload: {e}")))
}

pub fn decode(bytes: &[u8]) -> Result<WireMessage, DecodeError> {
    if bytes.len() > MAX_DATAGRAM {
        return Err(DecodeError::Malformed(format!(
            "datagram of {} bytes exceeds limit",
            bytes.len()
        )));
    }
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(DecodeError::Malformed("top level must be an object".into()));
    };
    let kind = match map.remove("type") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(DecodeError::Malformed("`type` must be a string".into())),
        None => return Err(DecodeError::Malformed("missing field `type`".into())),
    };
    let kind = MessageType::parse(&kind).ok_or(DecodeError::UnknownType(kind))?;
    let seq = take_u64(&mut map, "seq")?;
    let timestamp_ms = take_u64(&mut map, "timestamp_ms")?;
    let payload = map
        .remove("payload")
        .ok_or_else(|| DecodeError::Malformed("missing field `payload`".into()))?;
    if let Some(extra) = map.keys().next() {
        return Err(DecodeError::Malformed(format!("unknown field `{extra}`")));
    }
    let msg = match kind {
        MessageType::DetectionReport => {
            let p: ReportPayload = payload_as(payload)?;
            WireMessage::DetectionReport(DetectionReport {
                seq,
                timestamp_ms,
                detections: p.detections,
            })
        }
        MessageType::Telemetry => {
            let p: TelemetryPayload = payload_as(payload)?;
            WireMessage::Telemetry(Telemetry {
                seq,
                timestamp_ms,
                pose: p.pose,
                velocity: p.velocity,
                imu: p.imu,
                ultrasonic: UltrasonicReading {
                    left: p.ultrasonic.left,
                    front: p.ultrasonic.front,
                    right: p.ultrasonic.right,
                },
            })
        }
        MessageType::Command => {
            let p: CommandPayload = payload_as(payload)?;
            WireMessage::Command(CommandMsg {
                seq,
                timestamp_ms,
                command: VelocityCommand {
                    linear: p.linear,
                    angular: p.angular,
                },
            })
        }
        MessageType::TargetRequest => {
            let p: TargetPayload = payload_as(payload)?;
            WireMessage::TargetRequest(TargetRequest {
                seq,
                timestamp_ms,
                x: p.x,
                y: p.y,
            })
        }
    };
    msg.validate().map_err(DecodeError::Invalid)?;
    Ok(msg)
}

/// Drops detections until the report fits in one datagram. Close detections
/// go last, then the nearest ones; survivors keep their original order.
pub fn fit_report(report: &DetectionReport) -> DetectionReport {
    let fits = |r: &DetectionReport| encode(&WireMessage::DetectionReport(r.clone())).is_ok();
    if fits(report) {
        return report.clone();
    }
    let mut rank: Vec<usize> = (0..report.detections.len()).collect();
    rank.sort_by(|&a, &b| {
        let (da, db) = (&report.detections[a], &report.detections[b]);
        db.close
            .cmp(&da.close)
            .then(
                da.est_distance
                    .unwrap_or(f64::MAX)
                    .total_cmp(&db.est_distance.unwrap_or(f64::MAX)),
            )
            .then(a.cmp(&b))
    });
    let mut keep = rank.len();
    loop {
        let mut chosen: Vec<usize> = rank[..keep].to_vec();
        chosen.sort_unstable();
        let candidate = DetectionReport {
            detections: chosen
                .iter()
                .map(|&i| report.detections[i].clone())
                .collect(),
            ..report.clone()
        };
        if keep == 0 || fits(&candidate) {
            return candidate;
        }
        keep -= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{ObjectKind, Zone};

    fn telemetry(theta: f64) -> Telemetry {
        Telemetry {
            seq: 3,
            timestamp_ms: 150,
            pose: PoseField {
                x: 1.0,
                y: -2.5,
                theta,
            },
            velocity: VelocityField { v: 0.3, omega: 0.0 },
            imu: ImuField {
                yaw: theta,
                pitch: 0.0,
                roll: 0.0,
            },
            ultrasonic: UltrasonicReading {
                left: 4.0,
                front: 1.25,
                right: 4.0,
            },
        }
    }

    #[test]
    fn stop_command_round_trips() {
        let m = WireMessage::Command(CommandMsg {
            seq: 1,
            timestamp_ms: 0,
            command: VelocityCommand::STOP,
        });
        let bytes = encode(&m).unwrap();
        assert_eq!(
            std::str::from_utf8(&bytes).unwrap(),
            r#"{"payload":{"angular":0.0,"linear":0.0},"seq":1,"timestamp_ms":0,"type":"command"}"#
        );
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn empty_report_is_valid() {
        let m = WireMessage::DetectionReport(DetectionReport {
            seq: 9,
            timestamp_ms: 200,
            detections: vec![],
        });
        let bytes = encode(&m).unwrap();
        assert!(std::str::from_utf8(&bytes)
            .unwrap()
            .contains(r#""detections":[]"#));
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn theta_pi_survives_nine_digits() {
        let m = WireMessage::Telemetry(telemetry(PI));
        let WireMessage::Telemetry(back) = decode(&encode(&m).unwrap()).unwrap() else {
            panic!()
        };
        assert_eq!(back.pose.theta, 3.14159265);
        assert!((back.pose.theta - PI).abs() < 5e-9);
        assert_eq!(back.pose.theta, quantize(PI));
        assert!(back.pose.theta > -PI && back.pose.theta <= PI);
    }

    #[test]
    fn decode_rejects_bad_input() {
        let good = encode(&WireMessage::Telemetry(telemetry(0.5))).unwrap();
        assert!(matches!(
            decode(&good[..good.len() - 3]),
            Err(DecodeError::Malformed(_))
        ));
        assert!(matches!(
            decode(b"\xff\xfe"),
            Err(DecodeError::Malformed(_))
        ));

        let text = String::from_utf8(good.clone()).unwrap();
        let negative = text.replace(r#""front":1.25"#, r#""front":-1.0"#);
        assert!(matches!(
            decode(negative.as_bytes()),
            Err(DecodeError::Invalid(_))
        ));

        let unknown = text.replace(r#""type":"telemetry""#, r#""type":"weather""#);
        assert_eq!(
            decode(unknown.as_bytes()),
            Err(DecodeError::UnknownType("weather".into()))
        );

        let extra = text.replace(r#""seq":3"#, r#""seq":3,"extra":1"#);
        assert!(matches!(
            decode(extra.as_bytes()),
            Err(DecodeError::Malformed(_))
        ));

        let extra_payload = text.replace(r#""front":1.25"#, r#""front":1.25,"up":2.0"#);
        assert!(matches!(
            decode(extra_payload.as_bytes()),
            Err(DecodeError::Malformed(_))
        ));

        let missing = text.replace(r#""left":4.0,"#, "");
        assert!(matches!(
            decode(missing.as_bytes()),
            Err(DecodeError::Malformed(_))
        ));
    }

    #[test]
    fn encode_rejects_oversized_and_invalid() {
        let det = Detection {
            kind: ObjectKind::Obstacle,
            zone: Zone::Front,
            est_distance: Some(1.23456789),
            close: false,
            source_id: "obstacle-with-a-long-name".into(),
        };
        let big = DetectionReport {
            seq: 1,
            timestamp_ms: 0,
            detections: vec![det.clone(); 40],
        };
        assert!(matches!(
            encode(&WireMessage::DetectionReport(big.clone())),
            Err(EncodeError::MessageTooLarge(_))
        ));
        let fitted = fit_report(&big);
        assert!(!fitted.detections.is_empty());
        assert!(encode(&WireMessage::DetectionReport(fitted)).is_ok());

        let bad = WireMessage::Telemetry(telemetry(4.0));
        assert!(matches!(encode(&bad), Err(EncodeError::Invalid(_))));
    }

    #[test]
    fn fit_report_keeps_close_detections() {
        let mk = |i: usize, close: bool| Detection {
            kind: ObjectKind::Obstacle,
            zone: Zone::Left,
            est_distance: Some(if close { 0.5 } else { 3.0 + i as f64 }),
            close,
            source_id: format!("far-away-obstacle-{i:03}"),
        };
        let mut dets: Vec<Detection> = (0..30).map(|i| mk(i, false)).collect();
        dets.insert(17, mk(99, true));
        let fitted = fit_report(&DetectionReport {
            seq: 1,
            timestamp_ms: 0,
            detections: dets,
        });
        assert!(fitted.detections.iter().any(|d| d.close));
        let ids: Vec<&String> = fitted.detections.iter().map(|d| &d.source_id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0), 0.0);
        assert_eq!(quantize(-0.0).to_bits(), 0.0f64.to_bits());
        assert_eq!(quantize(1.0 / 3.0), 0.333333333);
        assert_eq!(quantize(123456789012.0), 123456789000.0);
        assert_eq!(quantize(quantize(2.0f64.sqrt())), quantize(2.0f64.sqrt()));
    }
}
