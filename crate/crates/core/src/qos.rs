//! QoS awareness: per-dimension bandwidth accumulation, session delay,
//! concurrent-connection peaks, handshake accounting, and an optional
//! active TCP probe.

use std::collections::BTreeMap;
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::Session;
use crate::mda::AwarenessLabels;

/// Dimensions bucketed for bandwidth statistics.
pub const QOS_DIMENSIONS: [&str; 4] = ["service", "application", "device_type", "provider"];

pub const PENDING_KEY: &str = "pending:pending";

#[derive(Debug, Error, PartialEq)]
pub enum QosError {
    #[error("events not time-ordered at index {0}")]
    UnorderedEvents(usize),
}

/// Interval between the first and last packets of a session.
pub fn session_delay(s: &Session) -> f64 {
    s.last_ts - s.first_ts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnEvent {
    Open,
    Close,
}

/// Sweep-line maximum of simultaneously open connections.
pub fn peak_concurrent(events: &[(f64, ConnEvent)]) -> Result<u64, QosError> {
    let mut open: i64 = 0;
    let mut peak: i64 = 0;
    let mut last_ts = f64::NEG_INFINITY;
    for (i, (ts, ev)) in events.iter().enumerate() {
        if *ts < last_ts {
            return Err(QosError::UnorderedEvents(i));
        }
        last_ts = *ts;
        match ev {
            ConnEvent::Open => open += 1,
            ConnEvent::Close => open -= 1,
        }
        peak = peak.max(open);
    }
    Ok(peak.max(0) as u64)
}

/// Closed measurement window. Byte buckets are keyed "dimension:label".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosSnapshot {
    pub window_start: f64,
    pub window_end: f64,
    pub total_bytes: u64,
    pub bytes_by_dimension: BTreeMap<String, u64>,
    pub concurrent_sessions: u64,
    pub delay_samples: Vec<(String, f64)>,
    pub connect_success: u64,
    pub connect_fail: u64,
}

impl QosSnapshot {
    pub fn bandwidth_bps(&self, key: &str) -> f64 {
        let bytes = self.bytes_by_dimension.get(key).copied().unwrap_or(0);
        bytes as f64 * 8.0 / (self.window_end - self.window_start)
    }

    pub fn total_bandwidth_bps(&self) -> f64 {
        self.total_bytes as f64 * 8.0 / (self.window_end - self.window_start)
    }
}

/// Accumulator for the currently open window.
#[derive(Debug)]
pub struct QosAccumulator {
    pub window_start: f64,
    total_bytes: u64,
    buckets: BTreeMap<String, u64>,
    open_sessions: i64,
    peak_sessions: i64,
    delay_samples: Vec<(String, f64)>,
    connect_success: u64,
    connect_fail: u64,
    closed: bool,
}

impl QosAccumulator {
    pub fn new(window_start: f64) -> Self {
        QosAccumulator {
            window_start,
            total_bytes: 0,
            buckets: BTreeMap::new(),
            open_sessions: 0,
            peak_sessions: 0,
            delay_samples: Vec::new(),
            connect_success: 0,
            connect_fail: 0,
            closed: false,
        }
    }

    fn add(&mut self, key: String, bytes: u64) {
        *self.buckets.entry(key).or_insert(0) += bytes;
    }

    /// Adds a packet's wire bytes to the window; unlabeled bytes land in the
    /// pending bucket until the owning session expires.
    pub fn record_traffic(&mut self, wire_len: u32, labels: Option<&AwarenessLabels>) {
        let bytes = wire_len as u64;
        self.total_bytes += bytes;
        match labels {
            Some(labels) => self.add_labeled(bytes, labels),
            None => self.add(PENDING_KEY.to_string(), bytes),
        }
    }

    fn add_labeled(&mut self, bytes: u64, labels: &AwarenessLabels) {
        for dim in QOS_DIMENSIONS {
            let label = labels.dimension_value(dim).unwrap_or_default();
            self.add(format!("{dim}:{label}"), bytes);
        }
    }

    /// Moves bytes recorded under pending to the session's labels once known.
    pub fn reassign_pending(&mut self, bytes: u64, labels: &AwarenessLabels) {
        if bytes == 0 {
            return;
        }
        let pending = self.buckets.entry(PENDING_KEY.to_string()).or_insert(0);
        let moved = bytes.min(*pending);
        *pending -= moved;
        if moved > 0 {
            self.add_labeled(moved, labels);
        }
    }

    pub fn session_opened(&mut self) {
        self.open_sessions += 1;
        self.peak_sessions = self.peak_sessions.max(self.open_sessions);
    }

    pub fn session_closed(&mut self) {
        self.open_sessions -= 1;
    }

    /// Carries the live-session count into a fresh window.
    pub fn carry_open_sessions(&mut self, open: i64) {
        self.open_sessions = open;
        self.peak_sessions = self.peak_sessions.max(open);
    }

    pub fn open_sessions(&self) -> i64 {
        self.open_sessions
    }

    pub fn add_delay_sample(&mut self, application: &str, delay: f64) {
        self.delay_samples.push((application.to_string(), delay));
    }

    pub fn record_handshake(&mut self, success: bool) {
        if success {
            self.connect_success += 1;
        } else {
            self.connect_fail += 1;
        }
    }

    /// Closes the window. Idempotent: a second close yields nothing.
    pub fn close(&mut self, window_end: f64) -> Option<QosSnapshot> {
        if self.closed {
            return None;
        }
        self.closed = true;
        let mut buckets = std::mem::take(&mut self.buckets);
        buckets.retain(|_, v| *v > 0);
        Some(QosSnapshot {
            window_start: self.window_start,
            window_end: window_end.max(self.window_start + 1e-6),
            total_bytes: self.total_bytes,
            bytes_by_dimension: buckets,
            concurrent_sessions: self.peak_sessions.max(0) as u64,
            delay_samples: std::mem::take(&mut self.delay_samples),
            connect_success: self.connect_success,
            connect_fail: self.connect_fail,
        })
    }

    pub fn estimated_bytes(&self) -> usize {
        std::mem::size_of::<Self>()
            + self
                .buckets
                .keys()
                .map(|k| k.len() + 8 + 48)
                .sum::<usize>()
            + self.delay_samples.len() * 40
    }
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("probe target {0} not in allow-list")]
    TargetNotAllowed(String),
    #[error("all {0} probes timed out")]
    AllProbesTimedOut(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub rtt_min: f64,
    pub rtt_mean: f64,
    pub rtt_p95: f64,
    pub loss: f64,
}

/// TCP connection-establishment probes against an allow-listed target.
pub fn active_probe(
    target: &str,
    count: usize,
    timeout: Duration,
    allowlist: &[String],
) -> Result<ProbeReport, ProbeError> {
    if !allowlist.iter().any(|a| a == target) {
        return Err(ProbeError::TargetNotAllowed(target.to_string()));
    }
    let mut rtts: Vec<f64> = Vec::new();
    let mut timeouts = 0usize;
    for _ in 0..count {
        let start = Instant::now();
        let addr = target
            .to_socket_addrs()
            .ok()
            .and_then(|mut it| it.next());
        let connected = match addr {
            Some(addr) => TcpStream::connect_timeout(&addr, timeout).is_ok(),
            None => false,
        };
        if connected {
            rtts.push(start.elapsed().as_secs_f64());
        } else {
            timeouts += 1;
        }
    }
    if rtts.is_empty() {
        return Err(ProbeError::AllProbesTimedOut(count));
    }
    rtts.sort_by(f64::total_cmp);
    let p95_idx = ((rtts.len() as f64 * 0.95).ceil() as usize).saturating_sub(1);
    Ok(ProbeReport {
        rtt_min: rtts[0],
        rtt_mean: rtts.iter().sum::<f64>() / rtts.len() as f64,
        rtt_p95: rtts[p95_idx],
        loss: timeouts as f64 / count as f64,
    })
}
