//! The gateway pipeline: packets in, classified SHDR records and QoS
//! windows out through the reporter.
//!
//! Single-threaded pull design: each packet is folded into its session,
//! sessions are classified when they expire, and QoS windows are aligned to
//! capture timestamps so replayed traces produce identical output.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::net::Ipv4Addr;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capture::{CaptureError, CaptureSource, Packet, SkipCounters, Transport};
use crate::flow::{FlowConfig, FlowKey, FlowTable, Session};
use crate::mda::{classify_all, AwarenessLabels, DecisionTreeModel, SignatureDb, DIMENSIONS};
use crate::policy::{evaluate_filter, parse_policy, FilterDecision, PolicyDocument, PolicyStore};
use crate::qos::{session_delay, QosAccumulator, QosSnapshot};
use crate::reporter::{ReportQueue, ReporterConfig};
use crate::shdr::{build_record, qos_record, RecordType};
use crate::trafficgen::TruthRecord;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub gateway_id: String,
    pub window_secs: f64,
    pub flow: FlowConfig,
    pub delay_seed: u64,
    /// Retain per-session labels for accuracy evaluation.
    pub collect_labels: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            gateway_id: "gw-0".into(),
            window_secs: 60.0,
            flow: FlowConfig::default(),
            delay_seed: 0x51ee7,
            collect_labels: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StageCounters {
    pub packets: u64,
    pub sessions_closed: u64,
    pub gets_parsed: u64,
    pub records_built: u64,
    pub records_cleansed: u64,
    pub alerts: u64,
    pub qos_windows: u64,
}

/// Final labels of one expired session, for accuracy evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLabel {
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub transport: Transport,
    pub first_ts: f64,
    pub labels: AwarenessLabels,
}

impl SessionLabel {
    fn new(s: &Session, labels: &AwarenessLabels) -> Self {
        let (dst_ip, dst_port) = if s.key.endpoint_a == s.initiator {
            s.key.endpoint_b
        } else {
            s.key.endpoint_a
        };
        SessionLabel {
            src_ip: s.initiator.0,
            src_port: s.initiator.1,
            dst_ip,
            dst_port,
            transport: s.key.transport,
            first_ts: s.first_ts,
            labels: labels.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub counters: StageCounters,
    pub elapsed_secs: f64,
    pub packets_per_sec: f64,
    pub gets_per_sec: f64,
    pub peak_memory_bytes: u64,
    pub skipped_frames: u64,
    pub sent_batches: u64,
    pub sent_batch_records: u64,
    pub sent_realtime: u64,
    pub spilled_realtime: u64,
    pub dropped_batch: u64,
    pub dropped_realtime: u64,
    pub cleanse_reasons: BTreeMap<String, u64>,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub db: SignatureDb,
    pub model: Option<DecisionTreeModel>,
    pub policy: PolicyStore,
    pub reporter: ReportQueue,
    pub counters: StageCounters,
    pub cleanse_reasons: BTreeMap<String, u64>,
    pub session_labels: Vec<SessionLabel>,
    pub peak_memory: usize,
    table: FlowTable,
    qos: Option<QosAccumulator>,
    /// Per-session bytes charged to the pending bucket of the current window.
    pending: HashMap<FlowKey, (u64, u64)>,
    epoch: u64,
    next_batch_epoch: u64,
    rng: ChaCha8Rng,
    last_ts: f64,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        db: SignatureDb,
        model: Option<DecisionTreeModel>,
        initial_policy: PolicyDocument,
        reporter_config: ReporterConfig,
    ) -> Self {
        let table = FlowTable::new(config.flow);
        let rng = ChaCha8Rng::seed_from_u64(config.delay_seed);
        Pipeline {
            config,
            db,
            model,
            policy: PolicyStore::new(initial_policy),
            reporter: ReportQueue::new(reporter_config),
            counters: StageCounters::default(),
            cleanse_reasons: BTreeMap::new(),
            session_labels: Vec::new(),
            peak_memory: 0,
            table,
            qos: None,
            pending: HashMap::new(),
            epoch: 0,
            next_batch_epoch: 0,
            rng,
            last_ts: 0.0,
        }
    }

    pub fn estimated_bytes(&self) -> usize {
        self.table.estimated_bytes()
            + self.reporter.estimated_bytes()
            + self.qos.as_ref().map(|q| q.estimated_bytes()).unwrap_or(0)
            + self.pending.len() * 48
    }

    fn update_peak(&mut self) {
        self.peak_memory = self.peak_memory.max(self.estimated_bytes());
    }

    /// Monotone batch-file epoch so intra-window flushes never collide.
    fn batch_epoch(&mut self, ts: f64) -> f64 {
        let e = (ts.max(0.0) as u64).max(self.next_batch_epoch);
        self.next_batch_epoch = e + 1;
        e as f64
    }

    pub fn process_packet(&mut self, pkt: &Packet) {
        self.counters.packets += 1;
        self.last_ts = self.last_ts.max(pkt.ts);
        let window = self.config.window_secs;
        match &self.qos {
            None => {
                let start = (pkt.ts / window).floor() * window;
                self.qos = Some(QosAccumulator::new(start));
            }
            Some(acc) => {
                if pkt.ts >= acc.window_start + window {
                    self.roll_window(pkt.ts);
                }
            }
        }
        let key = FlowKey::from_packet(pkt);
        self.qos
            .as_mut()
            .unwrap()
            .record_traffic(pkt.wire_len, None);
        let entry = self.pending.entry(key).or_insert((self.epoch, 0));
        if entry.0 != self.epoch {
            *entry = (self.epoch, 0);
        }
        entry.1 += pkt.wire_len as u64;
        let fresh = self.table.get(&key).is_none();
        if fresh {
            self.qos.as_mut().unwrap().session_opened();
        }
        let out = self.table.upsert(pkt);
        if let Some(s) = out.evicted {
            self.finalize(s);
        }
        if let Some(s) = out.closed {
            self.finalize(s);
        }
        if self.counters.packets % 256 == 0 {
            self.update_peak();
        }
    }

    fn roll_window(&mut self, now: f64) {
        let window = self.config.window_secs;
        let idle = self.config.flow.idle_timeout;
        for s in self.table.expire(now, idle) {
            self.finalize(s);
        }
        let mut acc = self.qos.take().expect("window open");
        let end = acc.window_start + window;
        if let Some(snap) = acc.close(end) {
            self.emit_qos(snap);
        }
        let mut start = end;
        while now >= start + window {
            start += window;
        }
        let mut next = QosAccumulator::new(start);
        next.carry_open_sessions(self.table.len() as i64);
        self.qos = Some(next);
        self.epoch += 1;
        self.pending.retain(|_, v| v.0 == self.epoch);
        let policy = self.policy.snapshot();
        let epoch = self.batch_epoch(end);
        let _ = self.reporter.flush_batch(&policy, epoch);
        self.reporter.retry_pending(&policy);
        self.update_peak();
    }

    fn emit_qos(&mut self, snap: QosSnapshot) {
        self.counters.qos_windows += 1;
        let policy = self.policy.snapshot();
        let record = qos_record(snap, policy.version, &self.config.gateway_id);
        self.reporter.submit(record);
    }

    fn finalize(&mut self, s: Session) {
        self.counters.sessions_closed += 1;
        let labels = classify_all(&s, &self.db, self.model.as_ref());
        let policy = self.policy.snapshot();
        {
            let acc = self.qos.as_mut().expect("window open");
            acc.session_closed();
            if let Some((epoch, bytes)) = self.pending.remove(&s.key) {
                if epoch == self.epoch {
                    acc.reassign_pending(bytes, &labels);
                }
            }
            if s.key.transport == Transport::Tcp && s.syn_ts.is_some() {
                acc.record_handshake(s.handshake_complete());
            }
            let rate = policy.delay_sampling_rate;
            if rate >= 1.0 || (rate > 0.0 && self.rng.random_bool(rate)) {
                acc.add_delay_sample(&labels.application, session_delay(&s));
            }
        }
        if s.http_stream.info().map(|i| i.complete).unwrap_or(false) {
            self.counters.gets_parsed += 1 + s.extra_gets as u64;
        }
        if self.config.collect_labels {
            self.session_labels.push(SessionLabel::new(&s, &labels));
        }
        let record = build_record(
            &s,
            labels,
            policy.version,
            &self.config.gateway_id,
            &policy.realtime_alert_apps,
        );
        self.counters.records_built += 1;
        match evaluate_filter(&policy, &record) {
            FilterDecision::Keep => {
                let is_alert = record.record_type == RecordType::Alert;
                if is_alert {
                    self.counters.alerts += 1;
                }
                self.reporter.submit(record);
                if is_alert {
                    self.reporter.send_realtime(&policy);
                } else if self.reporter.batch_due(&policy) {
                    let epoch = self.batch_epoch(self.last_ts);
                    let _ = self.reporter.flush_batch(&policy, epoch);
                }
            }
            FilterDecision::Drop(reason) => {
                self.counters.records_cleansed += 1;
                *self.cleanse_reasons.entry(reason).or_insert(0) += 1;
            }
        }
    }

    /// Drains open sessions, closes the last window, and flushes buffers.
    pub fn finish(&mut self) {
        for s in self.table.drain() {
            self.finalize(s);
        }
        if let Some(mut acc) = self.qos.take() {
            let end = self.last_ts.max(acc.window_start);
            if let Some(snap) = acc.close(end) {
                self.counters.qos_windows += 1;
                let policy = self.policy.snapshot();
                let record = qos_record(snap, policy.version, &self.config.gateway_id);
                self.reporter.submit(record);
            }
        }
        let policy = self.policy.snapshot();
        self.reporter.send_realtime(&policy);
        let epoch = self.batch_epoch(self.last_ts);
        let _ = self.reporter.flush_batch(&policy, epoch);
        self.reporter.retry_pending(&policy);
        self.update_peak();
    }

    /// Runs the full pipeline over a capture source.
    pub fn run<R: Read>(
        &mut self,
        src: &mut CaptureSource<R>,
    ) -> Result<RunReport, CaptureError> {
        let t0 = Instant::now();
        while let Some(pkt) = src.next_packet()? {
            self.process_packet(&pkt);
        }
        self.finish();
        let elapsed = t0.elapsed().as_secs_f64().max(1e-9);
        Ok(self.report(elapsed, &src.skips))
    }

    pub fn report(&self, elapsed: f64, skips: &SkipCounters) -> RunReport {
        let stats = self.reporter.stats;
        RunReport {
            counters: self.counters,
            elapsed_secs: elapsed,
            packets_per_sec: self.counters.packets as f64 / elapsed,
            gets_per_sec: self.counters.gets_parsed as f64 / elapsed,
            peak_memory_bytes: self.peak_memory as u64,
            skipped_frames: skips.skipped_frames(),
            sent_batches: stats.sent_batches,
            sent_batch_records: stats.sent_batch_records,
            sent_realtime: stats.sent_realtime,
            spilled_realtime: stats.spilled_realtime,
            dropped_batch: stats.dropped_batch,
            dropped_realtime: stats.dropped_realtime,
            cleanse_reasons: self.cleanse_reasons.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct DimAccuracy {
    pub correct: u64,
    pub total: u64,
}

impl DimAccuracy {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AccuracyReport {
    pub sessions_evaluated: u64,
    pub sessions_missing_truth: u64,
    pub per_dimension: BTreeMap<String, DimAccuracy>,
}

impl AccuracyReport {
    pub fn all_exact(&self) -> bool {
        self.sessions_missing_truth == 0
            && self
                .per_dimension
                .values()
                .all(|d| d.correct == d.total)
    }
}

/// Compares observed session labels against generator truth, dimension by
/// dimension.
pub fn evaluate_accuracy(got: &[SessionLabel], truth: &[TruthRecord]) -> AccuracyReport {
    type Key = (Ipv4Addr, u16, Ipv4Addr, u16, Transport);
    let index: HashMap<Key, &TruthRecord> = truth
        .iter()
        .map(|t| ((t.src_ip, t.src_port, t.dst_ip, t.dst_port, t.transport), t))
        .collect();
    let mut report = AccuracyReport::default();
    for dim in DIMENSIONS {
        report.per_dimension.insert(dim.to_string(), DimAccuracy::default());
    }
    for g in got {
        let key = (g.src_ip, g.src_port, g.dst_ip, g.dst_port, g.transport);
        match index.get(&key) {
            Some(t) => {
                report.sessions_evaluated += 1;
                for dim in DIMENSIONS {
                    let cell = report.per_dimension.get_mut(dim).unwrap();
                    cell.total += 1;
                    if g.labels.dimension_value(dim) == t.labels.dimension_value(dim) {
                        cell.correct += 1;
                    }
                }
            }
            None => report.sessions_missing_truth += 1,
        }
    }
    report
}

/// Pulls the latest policy from the collector; `Ok(None)` means the gateway
/// already has the newest version.
pub fn fetch_policy(
    base_url: &str,
    gateway_id: &str,
    have_version: u64,
) -> Result<Option<PolicyDocument>, String> {
    let url = format!("{base_url}/policy?gateway={gateway_id}&have={have_version}");
    match ureq::get(&url).timeout(Duration::from_secs(5)).call() {
        // 3xx is not an error to ureq; 304 means "nothing newer".
        Ok(resp) if resp.status() == 304 => Ok(None),
        Ok(resp) => {
            let body = resp.into_string().map_err(|e| e.to_string())?;
            parse_policy(body.as_bytes())
                .map(Some)
                .map_err(|e| e.to_string())
        }
        Err(ureq::Error::Status(304, _)) => Ok(None),
        Err(e) => Err(e.to_string()),
    }
}

/// Operator-side policy upload.
pub fn push_policy_to(base_url: &str, document: &[u8]) -> Result<String, String> {
    let url = format!("{base_url}/policy");
    match ureq::post(&url)
        .timeout(Duration::from_secs(5))
        .send_bytes(document)
    {
        Ok(resp) => resp.into_string().map_err(|e| e.to_string()),
        Err(ureq::Error::Status(code, resp)) => Err(format!(
            "status {code}: {}",
            resp.into_string().unwrap_or_default()
        )),
        Err(e) => Err(e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{SourceKind, TCP_ACK};
    use crate::shdr::{decode_batch, ShdrRecord};
    use crate::trafficgen::{generate_corpus, generate_web_corpus, CorpusSpec, DEFAULT_SIGNATURES};
    use std::io::Cursor;

    fn pipeline(dir: &std::path::Path, collect: bool) -> Pipeline {
        let db = SignatureDb::parse(DEFAULT_SIGNATURES).unwrap();
        let cfg = PipelineConfig {
            collect_labels: collect,
            ..PipelineConfig::default()
        };
        Pipeline::new(
            cfg,
            db,
            None,
            PolicyDocument::default(),
            ReporterConfig::offline(dir.to_path_buf(), "gw-0"),
        )
    }

    fn run_corpus(p: &mut Pipeline, pcap: &[u8]) -> RunReport {
        let mut src =
            CaptureSource::from_reader(Cursor::new(pcap.to_vec()), SourceKind::Synthetic).unwrap();
        p.run(&mut src).unwrap()
    }

    fn read_all_records(dir: &std::path::Path) -> Vec<ShdrRecord> {
        let mut out = Vec::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|e| e == "log").unwrap_or(false))
            .collect();
        // Sort by numeric epoch; lexical order would put "120" before "60".
        let epoch_of = |p: &std::path::PathBuf| -> u64 {
            p.file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.rsplit('-').next())
                .and_then(|s| s.parse().ok())
                .unwrap_or(0)
        };
        paths.sort_by_key(epoch_of);
        for path in paths {
            let body = std::fs::read_to_string(&path).unwrap();
            let (_, records, stats) = decode_batch(&body).unwrap();
            assert_eq!(stats.malformed, 0);
            out.extend(records);
        }
        out
    }

    #[test]
    fn corpus_accuracy_is_exact() {
        let corpus = generate_corpus(&CorpusSpec {
            sessions: 200,
            ..CorpusSpec::default()
        });
        let dir = tempfile::tempdir().unwrap();
        let mut p = pipeline(dir.path(), true);
        let report = run_corpus(&mut p, &corpus.pcap);
        assert_eq!(report.counters.sessions_closed, 200);
        let acc = evaluate_accuracy(&p.session_labels, &corpus.truth_records());
        assert_eq!(acc.sessions_evaluated, 200);
        assert!(acc.all_exact(), "accuracy report: {acc:?}");
    }

    #[test]
    fn qos_bytes_conserved_per_dimension() {
        let corpus = generate_corpus(&CorpusSpec {
            sessions: 120,
            ..CorpusSpec::default()
        });
        // Oracle: independent sum of wire bytes over the raw capture.
        let mut src =
            CaptureSource::from_reader(Cursor::new(corpus.pcap.clone()), SourceKind::Synthetic)
                .unwrap();
        let mut wire_total = 0u64;
        while let Some(pkt) = src.next_packet().unwrap() {
            wire_total += pkt.wire_len as u64;
        }
        let dir = tempfile::tempdir().unwrap();
        let mut p = pipeline(dir.path(), false);
        run_corpus(&mut p, &corpus.pcap);
        let records = read_all_records(dir.path());
        let snaps: Vec<&crate::qos::QosSnapshot> =
            records.iter().filter_map(|r| r.qos.as_ref()).collect();
        assert!(!snaps.is_empty());
        let total: u64 = snaps.iter().map(|s| s.total_bytes).sum();
        assert_eq!(total, wire_total);
        for snap in &snaps {
            let pending = snap
                .bytes_by_dimension
                .get(crate::qos::PENDING_KEY)
                .copied()
                .unwrap_or(0);
            for dim in crate::qos::QOS_DIMENSIONS {
                let sum: u64 = snap
                    .bytes_by_dimension
                    .iter()
                    .filter(|(k, _)| k.starts_with(&format!("{dim}:")))
                    .map(|(_, v)| *v)
                    .sum();
                assert_eq!(sum + pending, snap.total_bytes, "dimension {dim}");
            }
        }
    }

    #[test]
    fn no_pending_bytes_after_finish() {
        let corpus = generate_corpus(&CorpusSpec {
            sessions: 40,
            ..CorpusSpec::default()
        });
        let dir = tempfile::tempdir().unwrap();
        let mut p = pipeline(dir.path(), false);
        run_corpus(&mut p, &corpus.pcap);
        let records = read_all_records(dir.path());
        for r in records.iter().filter(|r| r.qos.is_some()) {
            // All sessions finalize before the last window closes.
            assert_eq!(
                r.qos
                    .as_ref()
                    .unwrap()
                    .bytes_by_dimension
                    .get(crate::qos::PENDING_KEY),
                None
            );
        }
    }

    #[test]
    fn record_counts_balance() {
        let corpus = generate_web_corpus(100, 5);
        let dir = tempfile::tempdir().unwrap();
        let mut p = pipeline(dir.path(), false);
        let report = run_corpus(&mut p, &corpus.pcap);
        assert_eq!(report.counters.records_built, 100);
        assert_eq!(report.counters.records_cleansed, 70);
        let records = read_all_records(dir.path());
        let sessions = records
            .iter()
            .filter(|r| r.record_type != RecordType::Qos)
            .count() as u64;
        assert_eq!(
            sessions,
            report.counters.records_built - report.counters.records_cleansed
        );
        assert_eq!(report.dropped_batch, 0);
        // Reasons ledger matches the drop count.
        let reason_total: u64 = report.cleanse_reasons.values().sum();
        assert_eq!(reason_total, 70);
    }

    #[test]
    fn alerts_offline_spill_into_batch() {
        let corpus = generate_corpus(&CorpusSpec {
            sessions: 48,
            ..CorpusSpec::default()
        });
        let dir = tempfile::tempdir().unwrap();
        let mut p = pipeline(dir.path(), false);
        let report = run_corpus(&mut p, &corpus.pcap);
        assert_eq!(report.counters.alerts, 6); // every 8th session is the smoke profile
        assert_eq!(report.spilled_realtime, 6);
        let records = read_all_records(dir.path());
        let alerts = records
            .iter()
            .filter(|r| r.record_type == RecordType::Alert)
            .count();
        assert_eq!(alerts, 6);
    }

    #[test]
    fn replay_is_deterministic() {
        let corpus = generate_corpus(&CorpusSpec {
            sessions: 64,
            ..CorpusSpec::default()
        });
        let mut bodies = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let mut p = pipeline(dir.path(), false);
            run_corpus(&mut p, &corpus.pcap);
            let mut paths: Vec<_> = std::fs::read_dir(dir.path())
                .unwrap()
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            paths.sort();
            let body: String = paths
                .iter()
                .map(|p| std::fs::read_to_string(p).unwrap())
                .collect();
            bodies.push(body);
        }
        assert_eq!(bodies[0], bodies[1]);
        assert!(!bodies[0].is_empty());
    }

    #[test]
    fn due_flush_produces_unique_files() {
        let corpus = generate_web_corpus(90, 2);
        let dir = tempfile::tempdir().unwrap();
        let mut p = pipeline(dir.path(), false);
        let mut policy = PolicyDocument::default();
        policy.version = 2;
        policy.batch_max_records = 10;
        policy.cleanse_ext_blocklist.clear();
        p.policy.try_update(policy).unwrap();
        let report = run_corpus(&mut p, &corpus.pcap);
        assert_eq!(report.counters.records_cleansed, 0);
        let files: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok().map(|e| e.file_name()))
            .collect();
        assert!(files.len() > 2, "expected multiple batch files, got {files:?}");
        let unique: std::collections::HashSet<_> = files.iter().collect();
        assert_eq!(unique.len(), files.len());
        let records = read_all_records(dir.path());
        // 90 sessions + final qos window
        assert_eq!(records.len(), 91);
    }

    #[test]
    fn windows_roll_on_capture_time() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = pipeline(dir.path(), false);
        let mk = |ts: f64, sport: u16| Packet {
            ts,
            src_mac: [1; 6],
            dst_mac: [2; 6],
            src_ip: "192.168.1.2".parse().unwrap(),
            dst_ip: "10.0.0.1".parse().unwrap(),
            src_port: sport,
            dst_port: 80,
            transport: Transport::Tcp,
            wire_len: 60,
            payload: vec![],
            tcp_flags: Some(TCP_ACK),
        };
        p.process_packet(&mk(10.0, 1000));
        p.process_packet(&mk(70.0, 1001));
        p.process_packet(&mk(190.0, 1002));
        p.finish();
        // Windows [0,60), [60,120), and the gap-skipped [180,190] close.
        assert_eq!(p.counters.qos_windows, 3);
        let records = read_all_records(dir.path());
        let snaps: Vec<f64> = records
            .iter()
            .filter_map(|r| r.qos.as_ref().map(|q| q.window_start))
            .collect();
        assert_eq!(snaps, vec![0.0, 60.0, 180.0]);
    }

    #[test]
    fn handshake_and_delay_samples_recorded() {
        let corpus = generate_corpus(&CorpusSpec {
            sessions: 16,
            ..CorpusSpec::default()
        });
        let dir = tempfile::tempdir().unwrap();
        let mut p = pipeline(dir.path(), false);
        run_corpus(&mut p, &corpus.pcap);
        let records = read_all_records(dir.path());
        let snap = records
            .iter()
            .find_map(|r| r.qos.as_ref())
            .expect("one qos window");
        // All TCP profiles complete their handshakes; sampling rate is 1.0.
        assert!(snap.connect_success > 0);
        assert_eq!(snap.connect_fail, 0);
        assert_eq!(snap.delay_samples.len(), 16);
        // TCP sessions observed a ~4 ms SYN->ACK handshake.
        assert!(snap.delay_samples.iter().all(|(_, d)| *d >= 0.0));
    }
}
