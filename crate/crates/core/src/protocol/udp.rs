//! UDP transport. One socket per role; a background thread decodes incoming
//! datagrams into an [`Inbox`].

use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;

use super::{encode, EncodeError, Inbox, WireMessage, MAX_DATAGRAM};

pub const ENV_VISION_ADDR: &str = "LOSNAV_VISION_ADDR";
pub const ENV_CONTROL_ADDR: &str = "LOSNAV_CONTROL_ADDR";
pub const ENV_ROBOT_ADDR: &str = "LOSNAV_ROBOT_ADDR";

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("cannot bind {addr}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("invalid address {0:?}")]
    Address(String),
    #[error("send failed")]
    Send(#[from] std::io::Error),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Vision,
    Control,
    Robot,
    TargetSource,
}

/// Addresses of every role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndpointConfig {
    pub vision: SocketAddr,
    pub control: SocketAddr,
    pub robot: SocketAddr,
    pub target: SocketAddr,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        let local = |port| SocketAddr::from(([127, 0, 0, 1], port));
        Self {
            control: local(47000),
            vision: local(47001),
            robot: local(47002),
            target: local(47003),
        }
    }
}

pub fn parse_addr(s: &str) -> Result<SocketAddr, EndpointError> {
    s.to_socket_addrs()
        .ok()
        .and_then(|mut it| it.next())
        .ok_or_else(|| EndpointError::Address(s.to_string()))
}

impl EndpointConfig {
    /// Defaults overridden by the `LOSNAV_*_ADDR` environment variables.
    pub fn from_env() -> Result<Self, EndpointError> {
        let mut cfg = Self::default();
        for (var, slot) in [
            (ENV_VISION_ADDR, &mut cfg.vision),
            (ENV_CONTROL_ADDR, &mut cfg.control),
            (ENV_ROBOT_ADDR, &mut cfg.robot),
        ] {
            if let Ok(v) = std::env::var(var) {
                *slot = parse_addr(&v)?;
            }
        }
        Ok(cfg)
    }

    pub fn addr_of(&self, role: Role) -> SocketAddr {
        match role {
            Role::Vision => self.vision,
            Role::Control => self.control,
            Role::Robot => self.robot,
            Role::TargetSource => self.target,
        }
    }
}

pub struct Endpoint {
    socket: UdpSocket,
    inbox: Arc<Inbox>,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl Endpoint {
    pub fn bind(role: Role, cfg: &EndpointConfig) -> Result<Self, EndpointError> {
        Self::bind_addr(cfg.addr_of(role))
    }

    pub fn bind_addr(addr: SocketAddr) -> Result<Self, EndpointError> {
        let socket =
            UdpSocket::bind(addr).map_err(|source| EndpointError::Bind { addr, source })?;
        socket
            .set_read_timeout(Some(Duration::from_millis(50)))
            .map_err(|source| EndpointError::Bind { addr, source })?;
        let rx = socket
            .try_clone()
            .map_err(|source| EndpointError::Bind { addr, source })?;
        let inbox = Arc::new(Inbox::new());
        let stop = Arc::new(AtomicBool::new(false));
        let worker = {
            let (inbox, stop) = (inbox.clone(), stop.clone());
            std::thread::spawn(move || {
                // One spare byte so oversized datagrams are seen as such.
                let mut buf = vec![0u8; MAX_DATAGRAM + 1];
                while !stop.load(Ordering::Relaxed) {
                    match rx.recv_from(&mut buf) {
                        Ok((n, _)) => {
                            inbox.offer_bytes(&buf[..n]);
                        }
                        Err(e)
                            if matches!(
                                e.kind(),
                                std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                            ) => {}
                        Err(_) => {}
                    }
                }
            })
        };
        Ok(Self {
            socket,
            inbox,
            stop,
            worker: Some(worker),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.socket
            .local_addr()
            .expect("bound socket has an address")
    }

    pub fn inbox(&self) -> &Arc<Inbox> {
        &self.inbox
    }

    pub fn send(&self, msg: &WireMessage, to: SocketAddr) -> Result<(), EndpointError> {
        let bytes = encode(msg)?;
        self.send_bytes(&bytes, to)
    }

    pub fn send_bytes(&self, bytes: &[u8], to: SocketAddr) -> Result<(), EndpointError> {
        self.socket.send_to(bytes, to)?;
        Ok(())
    }
}

impl Drop for Endpoint {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::DetectionReport;
    use std::time::Instant;

    fn ephemeral() -> Endpoint {
        Endpoint::bind_addr(SocketAddr::from(([127, 0, 0, 1], 0))).unwrap()
    }

    #[test]
    fn loopback_delivers_reports_in_order() {
        let (a, b) = (ephemeral(), ephemeral());
        for seq in 1..=100u64 {
            let r = DetectionReport {
                seq,
                timestamp_ms: seq * 200,
                detections: vec![],
            };
            a.send(&WireMessage::DetectionReport(r), b.local_addr())
                .unwrap();
        }
        let got = b.inbox().wait_for(Duration::from_secs(2), |v| {
            v.report().filter(|r| r.seq == 100).map(|r| r.seq)
        });
        assert_eq!(got, Some(100));
        let c = b.inbox().counters();
        assert!(c.received >= 99, "{c:?}");
        assert_eq!(c.decode_failures, 0);
    }

    #[test]
    fn corrupt_datagram_does_not_stop_receiver() {
        let (a, b) = (ephemeral(), ephemeral());
        a.send_bytes(b"\xff\xfe garbage", b.local_addr()).unwrap();
        let r = DetectionReport {
            seq: 3,
            timestamp_ms: 0,
            detections: vec![],
        };
        a.send(&WireMessage::DetectionReport(r), b.local_addr())
            .unwrap();
        let t0 = Instant::now();
        assert!(b
            .inbox()
            .wait_for(Duration::from_secs(2), |v| v.report().map(|r| r.seq))
            .is_some());
        assert!(t0.elapsed() < Duration::from_secs(2));
        assert_eq!(b.inbox().counters().decode_failures, 1);
    }

    #[test]
    fn second_bind_on_same_port_fails() {
        let a = ephemeral();
        assert!(matches!(
            Endpoint::bind_addr(a.local_addr()),
            Err(EndpointError::Bind { .. })
        ));
    }

    #[test]
    fn default_ports() {
        let c = EndpointConfig::default();
        assert_eq!(
            [
                c.control.port(),
                c.vision.port(),
                c.robot.port(),
                c.target.port()
            ],
            [47000, 47001, 47002, 47003]
        );
        assert!(parse_addr("not an address").is_err());
    }
}
