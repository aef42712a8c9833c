//! Bidirectional session tracking keyed by canonical 5-tuple.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use crate::capture::{Packet, Transport, TCP_ACK, TCP_FIN, TCP_RST, TCP_SYN};
use crate::http::HttpStream;
use crate::mda::AwarenessLabels;

pub const FEATURE_COUNT: usize = 8;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "duration",
    "total_pkts",
    "mean_pkt_len_up",
    "mean_pkt_len_down",
    "pkt_len_mode_up",
    "pkt_len_stddev_up",
    "mean_interarrival",
    "up_down_byte_ratio",
];

/// Canonical flow key: the lower (ip, port) endpoint always comes first, so
/// packets of either direction map to the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowKey {
    pub endpoint_a: (Ipv4Addr, u16),
    pub endpoint_b: (Ipv4Addr, u16),
    pub transport: Transport,
}

impl FlowKey {
    pub fn from_packet(pkt: &Packet) -> Self {
        let src = (pkt.src_ip, pkt.src_port);
        let dst = (pkt.dst_ip, pkt.dst_port);
        let (a, b) = if src <= dst { (src, dst) } else { (dst, src) };
        FlowKey {
            endpoint_a: a,
            endpoint_b: b,
            transport: pkt.transport,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Active,
    Expired,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub key: FlowKey,
    /// Endpoint that sent the first packet.
    pub initiator: (Ipv4Addr, u16),
    pub initiator_mac: [u8; 6],
    pub responder_mac: [u8; 6],
    pub first_ts: f64,
    pub last_ts: f64,
    pub pkt_count_up: u64,
    pub pkt_count_down: u64,
    pub byte_count_up: u64,
    pub byte_count_down: u64,
    pub pkt_len_samples_up: Vec<u32>,
    pub pkt_len_samples_down: Vec<u32>,
    /// Gaps between consecutive packets, seconds, capacity-bounded.
    pub interarrival_samples: Vec<f64>,
    pub state: SessionState,
    pub http_stream: HttpStream,
    /// Pipelined GETs beyond the first are counted, not parsed.
    pub extra_gets: u32,
    pub labels: Option<AwarenessLabels>,
    // TCP teardown / handshake tracking.
    fin_up: bool,
    fin_down: bool,
    rst: bool,
    pub syn_ts: Option<f64>,
    synack_seen: bool,
    /// Timestamp of handshake completion (initiator ACK after SYN-ACK).
    pub handshake_ts: Option<f64>,
}

impl Session {
    fn new(pkt: &Packet, key: FlowKey, max_scan: usize) -> Self {
        Session {
            key,
            initiator: (pkt.src_ip, pkt.src_port),
            initiator_mac: pkt.src_mac,
            responder_mac: pkt.dst_mac,
            first_ts: pkt.ts,
            last_ts: pkt.ts,
            pkt_count_up: 0,
            pkt_count_down: 0,
            byte_count_up: 0,
            byte_count_down: 0,
            pkt_len_samples_up: Vec::new(),
            pkt_len_samples_down: Vec::new(),
            interarrival_samples: Vec::new(),
            state: SessionState::Active,
            http_stream: HttpStream::new(max_scan),
            extra_gets: 0,
            labels: None,
            fin_up: false,
            fin_down: false,
            rst: false,
            syn_ts: None,
            synack_seen: false,
            handshake_ts: None,
        }
    }

    pub fn direction_of(&self, pkt: &Packet) -> Direction {
        if (pkt.src_ip, pkt.src_port) == self.initiator {
            Direction::Up
        } else {
            Direction::Down
        }
    }

    pub fn total_pkts(&self) -> u64 {
        self.pkt_count_up + self.pkt_count_down
    }

    pub fn total_bytes(&self) -> u64 {
        self.byte_count_up + self.byte_count_down
    }

    pub fn handshake_complete(&self) -> bool {
        self.handshake_ts.is_some()
    }

    /// SYN to handshake-completing ACK, when both were observed.
    pub fn handshake_delay(&self) -> Option<f64> {
        match (self.syn_ts, self.handshake_ts) {
            (Some(syn), Some(ack)) => Some(ack - syn),
            _ => None,
        }
    }

    /// TCP handshake was attempted (SYN seen) but never completed.
    pub fn handshake_failed(&self) -> bool {
        self.syn_ts.is_some() && self.handshake_ts.is_none()
    }

    fn update(&mut self, pkt: &Packet, sample_cap: usize) {
        let dir = self.direction_of(pkt);
        let gap = pkt.ts - self.last_ts;
        if self.total_pkts() > 0 && self.interarrival_samples.len() < sample_cap {
            self.interarrival_samples.push(gap.max(0.0));
        }
        self.last_ts = self.last_ts.max(pkt.ts);
        match dir {
            Direction::Up => {
                self.pkt_count_up += 1;
                self.byte_count_up += pkt.wire_len as u64;
                if self.pkt_len_samples_up.len() < sample_cap {
                    self.pkt_len_samples_up.push(pkt.wire_len);
                }
            }
            Direction::Down => {
                self.pkt_count_down += 1;
                self.byte_count_down += pkt.wire_len as u64;
                if self.pkt_len_samples_down.len() < sample_cap {
                    self.pkt_len_samples_down.push(pkt.wire_len);
                }
            }
        }
        if pkt.transport == Transport::Tcp {
            let syn = pkt.has_flag(TCP_SYN);
            let ack = pkt.has_flag(TCP_ACK);
            match dir {
                Direction::Up => {
                    if syn && !ack && self.syn_ts.is_none() {
                        self.syn_ts = Some(pkt.ts);
                    }
                    if ack && !syn && self.synack_seen && self.handshake_ts.is_none() {
                        self.handshake_ts = Some(pkt.ts);
                    }
                    if pkt.has_flag(TCP_FIN) {
                        self.fin_up = true;
                    }
                }
                Direction::Down => {
                    if syn && ack {
                        self.synack_seen = true;
                    }
                    if pkt.has_flag(TCP_FIN) {
                        self.fin_down = true;
                    }
                }
            }
            if pkt.has_flag(TCP_RST) {
                self.rst = true;
            }
            if dir == Direction::Up && !pkt.payload.is_empty() {
                self.http_stream.push(&pkt.payload);
            }
        }
    }

    fn teardown_complete(&self) -> bool {
        self.rst || (self.fin_up && self.fin_down)
    }

    /// Rough live-memory footprint, for the pipeline's internal accounting.
    pub fn estimated_bytes(&self) -> usize {
        std::mem::size_of::<Session>()
            + self.pkt_len_samples_up.capacity() * 4
            + self.pkt_len_samples_down.capacity() * 4
            + self.interarrival_samples.capacity() * 8
            + self.http_stream.buffered_bytes()
    }
}

/// Derived per-session feature vector.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SessionFeatures {
    pub duration: f64,
    pub total_pkts: f64,
    pub mean_pkt_len_up: f64,
    pub mean_pkt_len_down: f64,
    pub pkt_len_mode_up: f64,
    pub pkt_len_stddev_up: f64,
    pub mean_interarrival: f64,
    pub up_down_byte_ratio: f64,
}

impl SessionFeatures {
    pub fn as_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.duration,
            self.total_pkts,
            self.mean_pkt_len_up,
            self.mean_pkt_len_down,
            self.pkt_len_mode_up,
            self.pkt_len_stddev_up,
            self.mean_interarrival,
            self.up_down_byte_ratio,
        ]
    }
}

/// Computes the feature vector of a session with at least one packet.
pub fn features(s: &Session) -> SessionFeatures {
    let mean_up = if s.pkt_count_up > 0 {
        s.byte_count_up as f64 / s.pkt_count_up as f64
    } else {
        0.0
    };
    let mean_down = if s.pkt_count_down > 0 {
        s.byte_count_down as f64 / s.pkt_count_down as f64
    } else {
        0.0
    };
    // Mode over the bounded sample; ties break toward the smaller length.
    let mode_up = {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for &len in &s.pkt_len_samples_up {
            *counts.entry(len).or_insert(0) += 1;
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(len, _)| len as f64)
            .unwrap_or(0.0)
    };
    let stddev_up = {
        let n = s.pkt_len_samples_up.len();
        if n == 0 {
            0.0
        } else {
            let mean = s.pkt_len_samples_up.iter().map(|&l| l as f64).sum::<f64>() / n as f64;
            let var = s
                .pkt_len_samples_up
                .iter()
                .map(|&l| (l as f64 - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            var.sqrt()
        }
    };
    let mean_ia = if s.interarrival_samples.is_empty() {
        0.0
    } else {
        s.interarrival_samples.iter().sum::<f64>() / s.interarrival_samples.len() as f64
    };
    SessionFeatures {
        duration: s.last_ts - s.first_ts,
        total_pkts: s.total_pkts() as f64,
        mean_pkt_len_up: mean_up,
        mean_pkt_len_down: mean_down,
        pkt_len_mode_up: mode_up,
        pkt_len_stddev_up: stddev_up,
        mean_interarrival: mean_ia,
        up_down_byte_ratio: s.byte_count_up as f64 / (s.byte_count_down as f64 + 1.0),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FlowConfig {
    pub capacity: usize,
    pub sample_cap: usize,
    pub http_max_scan: usize,
    pub idle_timeout: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            capacity: 65_536,
            sample_cap: 64,
            http_max_scan: 8 * 1024,
            idle_timeout: 60.0,
        }
    }
}

#[derive(Debug, Default)]
pub struct UpsertOutcome {
    /// Session force-expired to make room (table was at capacity).
    pub evicted: Option<Session>,
    /// Session closed by TCP teardown on this packet.
    pub closed: Option<Session>,
}

pub struct FlowTable {
    pub config: FlowConfig,
    sessions: HashMap<FlowKey, Session>,
}

impl FlowTable {
    pub fn new(config: FlowConfig) -> Self {
        FlowTable {
            config,
            sessions: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn get(&self, key: &FlowKey) -> Option<&Session> {
        self.sessions.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn estimated_bytes(&self) -> usize {
        self.sessions.values().map(|s| s.estimated_bytes()).sum()
    }

    /// Folds a packet into its session, creating it on first sight.
    ///
    /// At capacity the oldest-idle session is force-expired and returned in
    /// `evicted`; the new packet is never dropped.
    pub fn upsert(&mut self, pkt: &Packet) -> UpsertOutcome {
        let key = FlowKey::from_packet(pkt);
        let mut outcome = UpsertOutcome::default();
        if !self.sessions.contains_key(&key) && self.sessions.len() >= self.config.capacity {
            if let Some(oldest) = self
                .sessions
                .values()
                .min_by(|a, b| a.last_ts.total_cmp(&b.last_ts))
                .map(|s| s.key)
            {
                let mut victim = self.sessions.remove(&oldest).unwrap();
                victim.state = SessionState::Expired;
                outcome.evicted = Some(victim);
            }
        }
        let sample_cap = self.config.sample_cap;
        let max_scan = self.config.http_max_scan;
        let session = self
            .sessions
            .entry(key)
            .or_insert_with(|| Session::new(pkt, key, max_scan));
        session.update(pkt, sample_cap);
        if session.teardown_complete() {
            let mut closed = self.sessions.remove(&key).unwrap();
            closed.state = SessionState::Expired;
            outcome.closed = Some(closed);
        }
        outcome
    }

    /// Removes and returns every session idle strictly longer than `idle_timeout`.
    pub fn expire(&mut self, now: f64, idle_timeout: f64) -> Vec<Session> {
        assert!(idle_timeout > 0.0, "idle_timeout must be positive");
        let expired_keys: Vec<FlowKey> = self
            .sessions
            .values()
            .filter(|s| now - s.last_ts > idle_timeout)
            .map(|s| s.key)
            .collect();
        let mut expired: Vec<Session> = expired_keys
            .into_iter()
            .map(|k| {
                let mut s = self.sessions.remove(&k).unwrap();
                s.state = SessionState::Expired;
                s
            })
            .collect();
        expired.sort_by(|a, b| a.first_ts.total_cmp(&b.first_ts).then(a.key_order(b)));
        expired
    }

    /// Drains all remaining sessions (end of trace).
    pub fn drain(&mut self) -> Vec<Session> {
        let mut out: Vec<Session> = self
            .sessions
            .drain()
            .map(|(_, mut s)| {
                s.state = SessionState::Expired;
                s
            })
            .collect();
        out.sort_by(|a, b| a.first_ts.total_cmp(&b.first_ts).then(a.key_order(b)));
        out
    }
}

impl Session {
    fn key_order(&self, other: &Session) -> std::cmp::Ordering {
        (self.key.endpoint_a, self.key.endpoint_b, self.key.transport).cmp(&(
            other.key.endpoint_a,
            other.key.endpoint_b,
            other.key.transport,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::Transport;

    fn pkt(src: &str, sport: u16, dst: &str, dport: u16, ts: f64, wire_len: u32) -> Packet {
        Packet {
            ts,
            src_mac: [1; 6],
            dst_mac: [2; 6],
            src_ip: src.parse().unwrap(),
            dst_ip: dst.parse().unwrap(),
            src_port: sport,
            dst_port: dport,
            transport: Transport::Tcp,
            wire_len,
            payload: Vec::new(),
            tcp_flags: Some(TCP_ACK),
        }
    }

    #[test]
    fn first_packet_creates_session() {
        let mut table = FlowTable::new(FlowConfig::default());
        table.upsert(&pkt("192.168.1.2", 1000, "10.0.0.1", 80, 10.0, 60));
        assert_eq!(table.len(), 1);
        let s = table.iter().next().unwrap();
        assert!((s.first_ts - 10.0).abs() < 1e-9);
        assert_eq!(s.pkt_count_up, 1);
        assert_eq!(s.pkt_count_down, 0);
    }

    #[test]
    fn reverse_direction_maps_to_same_session() {
        let mut table = FlowTable::new(FlowConfig::default());
        table.upsert(&pkt("192.168.1.2", 1000, "10.0.0.1", 80, 10.0, 60));
        table.upsert(&pkt("10.0.0.1", 80, "192.168.1.2", 1000, 10.1, 60));
        assert_eq!(table.len(), 1);
        let s = table.iter().next().unwrap();
        assert_eq!(s.pkt_count_up, 1);
        assert_eq!(s.pkt_count_down, 1);
        assert_eq!(s.initiator, ("192.168.1.2".parse().unwrap(), 1000));
    }

    #[test]
    fn byte_counts_sum_wire_len() {
        let mut table = FlowTable::new(FlowConfig::default());
        for (i, len) in [100u32, 200, 300].iter().enumerate() {
            table.upsert(&pkt("192.168.1.2", 1000, "10.0.0.1", 80, 10.0 + i as f64, *len));
        }
        let s = table.iter().next().unwrap();
        assert_eq!(s.byte_count_up, 600);
    }

    #[test]
    fn expire_boundary_is_strict() {
        let mut table = FlowTable::new(FlowConfig::default());
        table.upsert(&pkt("192.168.1.2", 1000, "10.0.0.1", 80, 5.0, 60));
        assert!(table.expire(65.0, 60.0).is_empty());
        let ex = table.expire(70.0, 60.0);
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].state, SessionState::Expired);
        assert!(table.is_empty());
    }

    #[test]
    fn expire_matches_brute_force_filter() {
        let mut table = FlowTable::new(FlowConfig::default());
        for i in 0..1000u32 {
            let ts = (i % 97) as f64;
            table.upsert(&pkt(
                &format!("192.168.{}.{}", i / 250 + 1, i % 250 + 1),
                1000 + (i % 500) as u16,
                "10.0.0.1",
                80,
                ts,
                60,
            ));
        }
        // Independent oracle: full scan over a snapshot of the table.
        let oracle: std::collections::HashSet<FlowKey> = table
            .iter()
            .filter(|s| 100.0 - s.last_ts > 50.0)
            .map(|s| s.key)
            .collect();
        let expired: std::collections::HashSet<FlowKey> =
            table.expire(100.0, 50.0).into_iter().map(|s| s.key).collect();
        assert_eq!(expired, oracle);
        assert!(!oracle.is_empty());
    }

    #[test]
    fn capacity_evicts_oldest_idle() {
        let cfg = FlowConfig {
            capacity: 2,
            ..FlowConfig::default()
        };
        let mut table = FlowTable::new(cfg);
        table.upsert(&pkt("192.168.1.2", 1, "10.0.0.1", 80, 1.0, 60));
        table.upsert(&pkt("192.168.1.3", 2, "10.0.0.1", 80, 2.0, 60));
        let out = table.upsert(&pkt("192.168.1.4", 3, "10.0.0.1", 80, 3.0, 60));
        let evicted = out.evicted.expect("eviction at capacity");
        assert_eq!(evicted.initiator.1, 1);
        assert_eq!(table.len(), 2);
    }

    #[test]
    fn fin_both_directions_closes() {
        let mut table = FlowTable::new(FlowConfig::default());
        let mut p1 = pkt("192.168.1.2", 1000, "10.0.0.1", 80, 1.0, 60);
        p1.tcp_flags = Some(TCP_FIN | TCP_ACK);
        assert!(table.upsert(&p1).closed.is_none());
        let mut p2 = pkt("10.0.0.1", 80, "192.168.1.2", 1000, 1.1, 60);
        p2.tcp_flags = Some(TCP_FIN | TCP_ACK);
        let out = table.upsert(&p2);
        assert!(out.closed.is_some());
        assert!(table.is_empty());
    }

    #[test]
    fn rst_closes_immediately() {
        let mut table = FlowTable::new(FlowConfig::default());
        table.upsert(&pkt("192.168.1.2", 1000, "10.0.0.1", 80, 1.0, 60));
        let mut p = pkt("192.168.1.2", 1000, "10.0.0.1", 80, 1.2, 60);
        p.tcp_flags = Some(TCP_RST);
        assert!(table.upsert(&p).closed.is_some());
    }

    #[test]
    fn features_fixed_length_session() {
        let mut table = FlowTable::new(FlowConfig::default());
        for i in 0..5 {
            table.upsert(&pkt("192.168.1.2", 1000, "10.0.0.1", 5000, i as f64, 96));
        }
        let f = features(table.iter().next().unwrap());
        assert_eq!(f.mean_pkt_len_up, 96.0);
        assert_eq!(f.pkt_len_mode_up, 96.0);
        assert_eq!(f.pkt_len_stddev_up, 0.0);
    }

    #[test]
    fn features_single_packet_degenerate() {
        let mut table = FlowTable::new(FlowConfig::default());
        table.upsert(&pkt("192.168.1.2", 1000, "10.0.0.1", 80, 7.0, 60));
        let f = features(table.iter().next().unwrap());
        assert_eq!(f.duration, 0.0);
        assert_eq!(f.mean_interarrival, 0.0);
    }

    #[test]
    fn interarrival_mean() {
        let mut table = FlowTable::new(FlowConfig::default());
        for ts in [0.0, 1.0, 3.0] {
            table.upsert(&pkt("192.168.1.2", 1000, "10.0.0.1", 80, ts, 60));
        }
        let s = table.iter().next().unwrap();
        assert_eq!(s.interarrival_samples, vec![1.0, 2.0]);
        let f = features(s);
        assert!((f.mean_interarrival - 1.5).abs() < 1e-12);
    }

    #[test]
    fn mode_tie_breaks_toward_smaller() {
        let mut table = FlowTable::new(FlowConfig::default());
        for (i, len) in [100u32, 200, 100, 200].iter().enumerate() {
            table.upsert(&pkt("192.168.1.2", 1000, "10.0.0.1", 80, i as f64, *len));
        }
        let f = features(table.iter().next().unwrap());
        assert_eq!(f.pkt_len_mode_up, 100.0);
    }

    #[test]
    fn sample_lists_respect_cap() {
        let cfg = FlowConfig {
            sample_cap: 4,
            ..FlowConfig::default()
        };
        let mut table = FlowTable::new(cfg);
        for i in 0..100 {
            table.upsert(&pkt("192.168.1.2", 1000, "10.0.0.1", 80, i as f64, 60));
        }
        let s = table.iter().next().unwrap();
        assert_eq!(s.pkt_len_samples_up.len(), 4);
        assert_eq!(s.interarrival_samples.len(), 4);
        assert_eq!(s.pkt_count_up, 100);
    }
}
