use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use super::{decode, CommandMsg, TargetRequest, Telemetry, WireMessage};
use crate::perception::DetectionReport;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InboxCounters {
    pub received: u64,
    pub decode_failures: u64,
    pub stale_dropped: u64,
}

#[derive(Debug, Default)]
struct Slots {
    telemetry: Option<Telemetry>,
    report: Option<DetectionReport>,
    command: Option<CommandMsg>,
    target: Option<TargetRequest>,
    counters: InboxCounters,
}

/// Latest-value mailbox: one slot per message type. A message older (by seq)
/// than the one already held is dropped and counted.
#[derive(Debug, Default)]
pub struct Inbox {
    slots: Mutex<Slots>,
    changed: Condvar,
}

fn newer<T>(slot: &Option<T>, seq: u64, seq_of: impl Fn(&T) -> u64) -> bool {
    slot.as_ref().is_none_or(|held| seq >= seq_of(held))
}

impl Inbox {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, Slots> {
        self.slots.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Stores `msg` if it is not stale. Returns whether it was kept.
    pub fn offer(&self, msg: WireMessage) -> bool {
        let mut s = self.lock();
        s.counters.received += 1;
        let seq = msg.seq();
        let kept = match msg {
            WireMessage::Telemetry(t) => {
                newer(&s.telemetry, seq, |h| h.seq).then(|| s.telemetry = Some(t))
            }
            WireMessage::DetectionReport(r) => {
                newer(&s.report, seq, |h| h.seq).then(|| s.report = Some(r))
            }
            WireMessage::Command(c) => {
                newer(&s.command, seq, |h| h.seq).then(|| s.command = Some(c))
            }
            WireMessage::TargetRequest(t) => {
                newer(&s.target, seq, |h| h.seq).then(|| s.target = Some(t))
            }
        }
        .is_some();
        if !kept {
            s.counters.stale_dropped += 1;
        }
        drop(s);
        self.changed.notify_all();
        kept
    }

    /// Decodes and stores a datagram; undecodable input only bumps a counter.
    pub fn offer_bytes(&self, bytes: &[u8]) -> bool {
        match decode(bytes) {
            Ok(msg) => self.offer(msg),
            Err(_) => {
                self.lock().counters.decode_failures += 1;
                false
            }
        }
    }

    pub fn counters(&self) -> InboxCounters {
        self.lock().counters
    }

    pub fn telemetry(&self) -> Option<Telemetry> {
        self.lock().telemetry
    }

    pub fn report(&self) -> Option<DetectionReport> {
        self.lock().report.clone()
    }

    pub fn command(&self) -> Option<CommandMsg> {
        self.lock().command
    }

    pub fn target(&self) -> Option<TargetRequest> {
        self.lock().target
    }

    /// Report with seq strictly above `after`, if one is held.
    pub fn report_after(&self, after: Option<u64>) -> Option<DetectionReport> {
        let s = self.lock();
        s.report
            .as_ref()
            .filter(|r| after.is_none_or(|a| r.seq > a))
            .cloned()
    }

    /// Blocks until `pick` yields a value or `timeout` passes.
    pub fn wait_for<T>(
        &self,
        timeout: Duration,
        mut pick: impl FnMut(&InboxView<'_>) -> Option<T>,
    ) -> Option<T> {
        let deadline = Instant::now() + timeout;
        let mut s = self.lock();
        loop {
            if let Some(v) = pick(&InboxView(&s)) {
                return Some(v);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            s = self
                .changed
                .wait_timeout(s, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    pub fn wait_telemetry_after(&self, after: Option<u64>, timeout: Duration) -> Option<Telemetry> {
        self.wait_for(timeout, |v| {
            v.telemetry()
                .filter(|t| after.is_none_or(|a| t.seq > a))
                .copied()
        })
    }

    pub fn wait_command_after(&self, after: Option<u64>, timeout: Duration) -> Option<CommandMsg> {
        self.wait_for(timeout, |v| {
            v.command()
                .filter(|c| after.is_none_or(|a| c.seq > a))
                .copied()
        })
    }

    pub fn wait_target_after(
        &self,
        after: Option<u64>,
        timeout: Duration,
    ) -> Option<TargetRequest> {
        self.wait_for(timeout, |v| {
            v.target()
                .filter(|t| after.is_none_or(|a| t.seq > a))
                .copied()
        })
    }
}

/// Read-only view handed to [`Inbox::wait_for`] predicates.
pub struct InboxView<'a>(&'a Slots);

impl InboxView<'_> {
    pub fn telemetry(&self) -> Option<&Telemetry> {
        self.0.telemetry.as_ref()
    }
    pub fn report(&self) -> Option<&DetectionReport> {
        self.0.report.as_ref()
    }
    pub fn command(&self) -> Option<&CommandMsg> {
        self.0.command.as_ref()
    }
    pub fn target(&self) -> Option<&TargetRequest> {
        self.0.target.as_ref()
    }
}
