//! Mock smart-home cloud: ingests SHDR batches and realtime records,
//! persists them append-only, serves policy documents, and answers
//! multi-dimensional aggregate queries.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::policy::{encode_policy, parse_policy, PolicyDocument, PolicyError};
use crate::shdr::{self, RecordType, ShdrRecord};

#[derive(Debug, Error)]
pub enum CollectorError {
    #[error("bad batch header: {0}")]
    BadHeader(String),
    #[error("malformed realtime record: {0}")]
    MalformedLine(String),
    #[error("unknown aggregate dimension: {0}")]
    UnknownDimension(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestOutcome {
    New,
    Duplicate,
}

#[derive(Debug, Clone)]
pub struct BatchMeta {
    pub bytes: u64,
    pub records: usize,
    pub malformed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct GatewayStatus {
    pub last_seen: f64,
    pub policy_version_acked: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub label: String,
    pub sessions: u64,
    pub bytes: u64,
    pub share: f64,
}

fn wall_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_secs_f64()
}

pub struct CollectorStore {
    data_dir: Option<PathBuf>,
    batches: HashMap<String, BatchMeta>,
    records: Vec<ShdrRecord>,
    alerts: Vec<(f64, ShdrRecord)>,
    policies: Vec<PolicyDocument>,
    gateway_status: HashMap<String, GatewayStatus>,
    pub realtime_count: u64,
    pub malformed_total: u64,
}

impl CollectorStore {
    pub fn in_memory(initial_policy: PolicyDocument) -> Self {
        CollectorStore {
            data_dir: None,
            batches: HashMap::new(),
            records: Vec::new(),
            alerts: Vec::new(),
            policies: vec![initial_policy],
            gateway_status: HashMap::new(),
            realtime_count: 0,
            malformed_total: 0,
        }
    }

    /// Opens a persistent store, replaying the append-only files on disk to
    /// rebuild the in-memory index.
    pub fn open(data_dir: PathBuf, initial_policy: PolicyDocument) -> Result<Self, CollectorError> {
        let mut store = Self::in_memory(initial_policy);
        fs::create_dir_all(data_dir.join("batches"))?;
        store.data_dir = Some(data_dir.clone());
        // Policies first so ingest sees the newest alert set.
        let policy_log = data_dir.join("policies.log");
        if policy_log.exists() {
            for line in fs::read_to_string(&policy_log)?.lines() {
                if let Ok(doc) = parse_policy(line.as_bytes()) {
                    if doc.version > store.latest_policy().version {
                        store.policies.push(doc);
                    }
                }
            }
        }
        let mut batch_files: Vec<PathBuf> = fs::read_dir(data_dir.join("batches"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        batch_files.sort();
        for path in batch_files {
            let filename = path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default();
            let body = fs::read(&path)?;
            // Already on disk; replay into memory only.
            let _ = store.ingest_batch_inner(&filename, &body, false);
        }
        let mut realtime_files: Vec<PathBuf> = fs::read_dir(&data_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .map(|f| f.to_string_lossy().starts_with("realtime-"))
                    .unwrap_or(false)
            })
            .collect();
        realtime_files.sort();
        for path in realtime_files {
            for line in fs::read_to_string(&path)?.lines() {
                let _ = store.ingest_realtime_inner(line, false);
            }
        }
        Ok(store)
    }

    fn persist_batch(&self, filename: &str, body: &[u8]) -> Result<(), CollectorError> {
        if let Some(dir) = &self.data_dir {
            fs::write(dir.join("batches").join(filename), body)?;
        }
        Ok(())
    }

    fn persist_realtime(&self, line: &str) -> Result<(), CollectorError> {
        if let Some(dir) = &self.data_dir {
            let day = (wall_now() as u64) / 86_400;
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join(format!("realtime-{day}.log")))?;
            f.write_all(line.as_bytes())?;
            if !line.ends_with('\n') {
                f.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    /// Stores a batch upload. Duplicate filenames are acknowledged no-ops.
    pub fn ingest_batch(
        &mut self,
        filename: &str,
        body: &[u8],
    ) -> Result<IngestOutcome, CollectorError> {
        self.ingest_batch_inner(filename, body, true)
    }

    fn ingest_batch_inner(
        &mut self,
        filename: &str,
        body: &[u8],
        persist: bool,
    ) -> Result<IngestOutcome, CollectorError> {
        if self.batches.contains_key(filename) {
            return Ok(IngestOutcome::Duplicate);
        }
        let text = std::str::from_utf8(body)
            .map_err(|e| CollectorError::BadHeader(format!("not UTF-8: {e}")))?;
        let (header, records, stats) = shdr::decode_batch(text)
            .map_err(|e| CollectorError::BadHeader(e.to_string()))?;
        if persist {
            self.persist_batch(filename, body)?;
        }
        let malformed = stats.malformed + stats.schema_violations;
        self.malformed_total += malformed;
        self.batches.insert(
            filename.to_string(),
            BatchMeta {
                bytes: body.len() as u64,
                records: records.len(),
                malformed,
            },
        );
        self.gateway_status
            .entry(header.gateway_id)
            .or_default()
            .last_seen = wall_now();
        self.records.extend(records);
        Ok(IngestOutcome::New)
    }

    /// Appends one realtime record; ALERT records also land in the alert log
    /// with their arrival timestamp.
    pub fn ingest_realtime(&mut self, body: &str) -> Result<(), CollectorError> {
        self.ingest_realtime_inner(body, true)
    }

    fn ingest_realtime_inner(&mut self, body: &str, persist: bool) -> Result<(), CollectorError> {
        let mut stats = shdr::DecodeStats::default();
        let record = shdr::decode(body, &mut stats)
            .map_err(|e| CollectorError::MalformedLine(e.to_string()))?;
        if persist {
            self.persist_realtime(body)?;
        }
        self.gateway_status
            .entry(record.gateway_id.clone())
            .or_default()
            .last_seen = wall_now();
        if record.record_type == RecordType::Alert {
            self.alerts.push((wall_now(), record.clone()));
        }
        self.records.push(record);
        self.realtime_count += 1;
        Ok(())
    }

    pub fn latest_policy(&self) -> &PolicyDocument {
        self.policies.last().expect("at least the initial policy")
    }

    /// Returns the latest policy when newer than `have_version`, recording
    /// the gateway's ack.
    pub fn serve_policy(
        &mut self,
        gateway_id: &str,
        have_version: u64,
    ) -> Option<PolicyDocument> {
        let status = self.gateway_status.entry(gateway_id.to_string()).or_default();
        status.last_seen = wall_now();
        status.policy_version_acked = status.policy_version_acked.max(have_version);
        let latest = self.policies.last().unwrap();
        if latest.version > have_version {
            Some(latest.clone())
        } else {
            None
        }
    }

    /// Operator upload of a new policy; must outrank the current latest.
    pub fn push_policy(&mut self, doc: PolicyDocument) -> Result<u64, CollectorError> {
        let latest = self.latest_policy().version;
        if doc.version <= latest {
            return Err(CollectorError::Policy(PolicyError::StaleVersion {
                current: latest,
                incoming: doc.version,
            }));
        }
        if let Some(dir) = &self.data_dir {
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join("policies.log"))?;
            f.write_all(&encode_policy(&doc))?;
            f.write_all(b"\n")?;
        }
        let version = doc.version;
        self.policies.push(doc);
        Ok(version)
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[ShdrRecord] {
        &self.records
    }

    pub fn alerts(&self) -> &[(f64, ShdrRecord)] {
        &self.alerts
    }

    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    pub fn gateway_status(&self, gateway_id: &str) -> Option<&GatewayStatus> {
        self.gateway_status.get(gateway_id)
    }

    /// Exact grouping of stored session/alert records over a time range.
    pub fn aggregate(
        &self,
        dimension: &str,
        from: f64,
        to: f64,
    ) -> Result<Vec<AggregateRow>, CollectorError> {
        if !crate::mda::DIMENSIONS.contains(&dimension) {
            return Err(CollectorError::UnknownDimension(dimension.to_string()));
        }
        let mut groups: HashMap<String, (u64, u64)> = HashMap::new();
        let mut total_sessions = 0u64;
        for r in &self.records {
            if r.record_type == RecordType::Qos {
                continue;
            }
            if r.ts_first < from || r.ts_first > to {
                continue;
            }
            let label = r
                .labels
                .dimension_value(dimension)
                .unwrap_or_else(|| "unknown".into());
            let entry = groups.entry(label).or_insert((0, 0));
            entry.0 += 1;
            entry.1 += r.byte_count_up + r.byte_count_down;
            total_sessions += 1;
        }
        let mut rows: Vec<AggregateRow> = groups
            .into_iter()
            .map(|(label, (sessions, bytes))| AggregateRow {
                label,
                sessions,
                bytes,
                share: sessions as f64 / total_sessions.max(1) as f64,
            })
            .collect();
        rows.sort_by(|a, b| b.sessions.cmp(&a.sessions).then(a.label.cmp(&b.label)));
        Ok(rows)
    }

    pub fn status_summary(&self) -> String {
        let mut gw: Vec<(&String, &GatewayStatus)> = self.gateway_status.iter().collect();
        gw.sort_by_key(|(id, _)| id.as_str());
        let gateways: Vec<String> = gw
            .iter()
            .map(|(id, s)| {
                format!(
                    "{{\"gateway_id\":\"{id}\",\"last_seen\":{:.3},\"policy_version_acked\":{}}}",
                    s.last_seen, s.policy_version_acked
                )
            })
            .collect();
        format!(
            "{{\"batches\":{},\"records\":{},\"alerts\":{},\"realtime\":{},\"malformed\":{},\"policy_version\":{},\"gateways\":[{}]}}",
            self.batches.len(),
            self.records.len(),
            self.alerts.len(),
            self.realtime_count,
            self.malformed_total,
            self.latest_policy().version,
            gateways.join(",")
        )
    }
}

/// Plot-ready tab-separated aggregate table.
pub fn aggregate_table(rows: &[AggregateRow]) -> String {
    let mut out = String::from("label\tsessions\tbytes\tshare\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.6}\n",
            r.label, r.sessions, r.bytes, r.share
        ));
    }
    out
}

fn query_param(url: &str, key: &str) -> Option<String> {
    let query = url.split_once('?')?.1;
    for pair in query.split('&') {
        let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
        if k == key {
            return Some(v.replace("%2F", "/").replace("%20", " "));
        }
    }
    None
}

/// Running HTTP front-end over a shared store.
pub struct CollectorServer {
    pub store: Arc<Mutex<CollectorStore>>,
    server: Arc<tiny_http::Server>,
    workers: Vec<std::thread::JoinHandle<()>>,
}

impl CollectorServer {
    /// Binds `addr` (e.g. "127.0.0.1:0") and serves requests on worker
    /// threads until `shutdown`.
    pub fn start(addr: &str, store: CollectorStore) -> std::io::Result<Self> {
        let server = Arc::new(
            tiny_http::Server::http(addr)
                .map_err(|e| std::io::Error::other(e.to_string()))?,
        );
        let store = Arc::new(Mutex::new(store));
        let workers = (0..4)
            .map(|_| {
                let server = server.clone();
                let store = store.clone();
                std::thread::spawn(move || {
                    while let Ok(req) = server.recv() {
                        handle_request(req, &store);
                    }
                })
            })
            .collect();
        Ok(CollectorServer {
            store,
            server,
            workers,
        })
    }

    pub fn local_addr(&self) -> String {
        match self.server.server_addr() {
            tiny_http::ListenAddr::IP(addr) => format!("http://{addr}"),
            other => format!("http://{other:?}"),
        }
    }

    pub fn shutdown(self) {
        // One unblock wakes one blocked recv; fire one per worker.
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers {
            let _ = w.join();
        }
    }
}

fn respond(req: tiny_http::Request, status: u16, body: String) {
    let response = tiny_http::Response::from_string(body).with_status_code(status);
    let _ = req.respond(response);
}

fn header_value(req: &tiny_http::Request, name: &str) -> Option<String> {
    req.headers()
        .iter()
        .find(|h| h.field.as_str().as_str().eq_ignore_ascii_case(name))
        .map(|h| h.value.as_str().to_string())
}

fn handle_request(mut req: tiny_http::Request, store: &Arc<Mutex<CollectorStore>>) {
    use tiny_http::Method;
    let url = req.url().to_string();
    let path = url.split('?').next().unwrap_or("").to_string();
    let method = req.method().clone();
    let is_write = matches!(method, Method::Post | Method::Put);
    match (path.as_str(), is_write) {
        ("/shdr/batch", true) => {
            let filename = match header_value(&req, "X-Shdr-Filename") {
                Some(f) if !f.is_empty() => f,
                _ => return respond(req, 400, "missing X-Shdr-Filename header".into()),
            };
            let mut body = Vec::new();
            if req.as_reader().read_to_end(&mut body).is_err() {
                return respond(req, 400, "unreadable body".into());
            }
            let outcome = store.lock().unwrap().ingest_batch(&filename, &body);
            match outcome {
                Ok(IngestOutcome::New) => respond(req, 200, "new".into()),
                Ok(IngestOutcome::Duplicate) => respond(req, 200, "duplicate".into()),
                Err(e) => respond(req, 400, e.to_string()),
            }
        }
        ("/shdr/realtime", true) => {
            let mut body = String::new();
            if req.as_reader().read_to_string(&mut body).is_err() {
                return respond(req, 400, "unreadable body".into());
            }
            match store.lock().unwrap().ingest_realtime(&body) {
                Ok(()) => respond(req, 200, "accepted".into()),
                Err(e) => respond(req, 400, e.to_string()),
            }
        }
        ("/policy", true) => {
            let mut body = Vec::new();
            if req.as_reader().read_to_end(&mut body).is_err() {
                return respond(req, 400, "unreadable body".into());
            }
            let doc = match parse_policy(&body) {
                Ok(doc) => doc,
                Err(e) => return respond(req, 400, e.to_string()),
            };
            match store.lock().unwrap().push_policy(doc) {
                Ok(v) => respond(req, 200, format!("active version {v}")),
                Err(CollectorError::Policy(PolicyError::StaleVersion { current, .. })) => {
                    respond(req, 409, format!("stale; current version {current}"))
                }
                Err(e) => respond(req, 400, e.to_string()),
            }
        }
        ("/policy", false) => {
            let gateway = query_param(&url, "gateway")
                .or_else(|| header_value(&req, "X-Gateway-Id"))
                .unwrap_or_else(|| "unknown".into());
            let have: u64 = query_param(&url, "have")
                .or_else(|| header_value(&req, "X-Have-Version"))
                .and_then(|v| v.parse().ok())
                .unwrap_or(0);
            let mut guard = store.lock().unwrap();
            let latest_version = guard.latest_policy().version;
            match guard.serve_policy(&gateway, have) {
                Some(doc) => {
                    drop(guard);
                    let response = tiny_http::Response::from_data(encode_policy(&doc))
                        .with_status_code(200)
                        .with_header(
                            tiny_http::Header::from_bytes(
                                "X-Policy-Version",
                                doc.version.to_string(),
                            )
                            .unwrap(),
                        );
                    let _ = req.respond(response);
                }
                None => {
                    drop(guard);
                    let response = tiny_http::Response::empty(304).with_header(
                        tiny_http::Header::from_bytes(
                            "X-Policy-Version",
                            latest_version.to_string(),
                        )
                        .unwrap(),
                    );
                    let _ = req.respond(response);
                }
            }
        }
        ("/aggregate", false) => {
            let dimension = query_param(&url, "dimension").unwrap_or_default();
            let from: f64 = query_param(&url, "from")
                .and_then(|v| v.parse().ok())
                .unwrap_or(f64::NEG_INFINITY);
            let to: f64 = query_param(&url, "to")
                .and_then(|v| v.parse().ok())
                .unwrap_or(f64::INFINITY);
            let result = store.lock().unwrap().aggregate(&dimension, from, to);
            match result {
                Ok(rows) => respond(req, 200, aggregate_table(&rows)),
                Err(e) => respond(req, 400, e.to_string()),
            }
        }
        ("/status", false) => {
            let body = store.lock().unwrap().status_summary();
            respond(req, 200, body)
        }
        _ => respond(req, 404, "not found".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn batch_body(n: usize, seed: u64) -> (String, Vec<ShdrRecord>) {
        let mut rng = StdRng::seed_from_u64(seed);
        let records: Vec<ShdrRecord> = (0..n)
            .map(|_| crate::shdr::fixtures::random_record(&mut rng))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let summary = shdr::write_batch_file(&records, dir.path(), "gw-1", 100.0)
            .unwrap()
            .unwrap();
        (fs::read_to_string(&summary.path).unwrap(), records)
    }

    #[test]
    fn fresh_batch_then_duplicate() {
        let mut store = CollectorStore::in_memory(PolicyDocument::default());
        let (body, records) = batch_body(100, 1);
        assert_eq!(
            store.ingest_batch("f1.log", body.as_bytes()).unwrap(),
            IngestOutcome::New
        );
        assert_eq!(store.record_count(), records.len());
        assert_eq!(
            store.ingest_batch("f1.log", body.as_bytes()).unwrap(),
            IngestOutcome::Duplicate
        );
        assert_eq!(store.record_count(), records.len());
    }

    #[test]
    fn corrupt_lines_counted_per_file() {
        let mut store = CollectorStore::in_memory(PolicyDocument::default());
        let (mut body, _) = batch_body(100, 2);
        // Corrupt two record lines in place.
        let mut lines: Vec<String> = body.lines().map(String::from).collect();
        lines[3] = "garbage".into();
        lines[7] = "{\"half\":".into();
        body = lines.join("\n");
        assert_eq!(
            store.ingest_batch("f2.log", body.as_bytes()).unwrap(),
            IngestOutcome::New
        );
        assert_eq!(store.record_count(), 98);
        assert_eq!(store.malformed_total, 2);
    }

    #[test]
    fn bad_header_rejected() {
        let mut store = CollectorStore::in_memory(PolicyDocument::default());
        let err = store.ingest_batch("f3.log", b"not a header\n").unwrap_err();
        assert!(matches!(err, CollectorError::BadHeader(_)));
        assert_eq!(store.batch_count(), 0);
    }

    #[test]
    fn realtime_alert_routing() {
        let mut store = CollectorStore::in_memory(PolicyDocument::default());
        let mut rng = StdRng::seed_from_u64(3);
        let mut alert = crate::shdr::fixtures::random_record(&mut rng);
        alert.record_type = RecordType::Alert;
        store.ingest_realtime(&shdr::encode(&alert)).unwrap();
        assert_eq!(store.alerts().len(), 1);
        let mut session = crate::shdr::fixtures::random_record(&mut rng);
        session.record_type = RecordType::Session;
        store.ingest_realtime(&shdr::encode(&session)).unwrap();
        assert_eq!(store.alerts().len(), 1);
        assert_eq!(store.record_count(), 2);
        assert!(store.ingest_realtime("junk").is_err());
        assert_eq!(store.record_count(), 2);
    }

    #[test]
    fn policy_serving_and_acks() {
        let mut store = CollectorStore::in_memory(PolicyDocument {
            version: 3,
            ..Default::default()
        });
        assert_eq!(store.serve_policy("gw-1", 0).unwrap().version, 3);
        assert!(store.serve_policy("gw-1", 3).is_none());
        store
            .push_policy(PolicyDocument {
                version: 4,
                ..Default::default()
            })
            .unwrap();
        assert_eq!(store.serve_policy("gw-1", 3).unwrap().version, 4);
        assert_eq!(store.gateway_status("gw-1").unwrap().policy_version_acked, 3);
        assert!(store
            .push_policy(PolicyDocument {
                version: 4,
                ..Default::default()
            })
            .is_err());
    }

    #[test]
    fn aggregate_matches_full_scan_oracle() {
        let mut store = CollectorStore::in_memory(PolicyDocument::default());
        let (body, records) = batch_body(500, 4);
        store.ingest_batch("f.log", body.as_bytes()).unwrap();
        let rows = store.aggregate("device_type", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        // Oracle: independent grouping over the source records.
        let mut oracle: HashMap<String, (u64, u64)> = HashMap::new();
        for r in &records {
            if r.record_type == RecordType::Qos {
                continue;
            }
            let e = oracle
                .entry(r.labels.device_type.as_str().to_string())
                .or_insert((0, 0));
            e.0 += 1;
            e.1 += r.byte_count_up + r.byte_count_down;
        }
        assert_eq!(rows.len(), oracle.len());
        for row in &rows {
            let (sessions, bytes) = oracle[&row.label];
            assert_eq!(row.sessions, sessions);
            assert_eq!(row.bytes, bytes);
        }
        let share_sum: f64 = rows.iter().map(|r| r.share).sum();
        assert!((share_sum - 1.0).abs() < 1e-9);
        let byte_sum: u64 = rows.iter().map(|r| r.bytes).sum();
        let oracle_bytes: u64 = oracle.values().map(|(_, b)| *b).sum();
        assert_eq!(byte_sum, oracle_bytes);
    }

    #[test]
    fn aggregate_unknown_dimension() {
        let store = CollectorStore::in_memory(PolicyDocument::default());
        assert!(matches!(
            store.aggregate("nope", 0.0, 1.0),
            Err(CollectorError::UnknownDimension(_))
        ));
    }

    #[test]
    fn aggregate_empty_range() {
        let mut store = CollectorStore::in_memory(PolicyDocument::default());
        let (body, _) = batch_body(50, 5);
        store.ingest_batch("f.log", body.as_bytes()).unwrap();
        let rows = store.aggregate("service", -10.0, -5.0).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn replaying_uploads_is_idempotent() {
        let mut store = CollectorStore::in_memory(PolicyDocument::default());
        let bodies: Vec<(String, String)> = (0..5)
            .map(|i| (format!("f{i}.log"), batch_body(20, 10 + i).0))
            .collect();
        for (name, body) in &bodies {
            store.ingest_batch(name, body.as_bytes()).unwrap();
        }
        let count1 = store.record_count();
        for (name, body) in &bodies {
            assert_eq!(
                store.ingest_batch(name, body.as_bytes()).unwrap(),
                IngestOutcome::Duplicate
            );
        }
        assert_eq!(store.record_count(), count1);
    }

    #[test]
    fn persistent_store_rebuilds_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let (body, records) = batch_body(30, 21);
        {
            let mut store =
                CollectorStore::open(dir.path().to_path_buf(), PolicyDocument::default()).unwrap();
            store.ingest_batch("b1.log", body.as_bytes()).unwrap();
            store
                .push_policy(PolicyDocument {
                    version: 7,
                    ..Default::default()
                })
                .unwrap();
            let mut rng = StdRng::seed_from_u64(99);
            let r = crate::shdr::fixtures::random_record(&mut rng);
            store.ingest_realtime(&shdr::encode(&r)).unwrap();
        }
        let store =
            CollectorStore::open(dir.path().to_path_buf(), PolicyDocument::default()).unwrap();
        assert_eq!(store.record_count(), records.len() + 1);
        assert_eq!(store.batch_count(), 1);
        assert_eq!(store.latest_policy().version, 7);
    }

    #[test]
    fn alert_log_timestamps_non_decreasing() {
        let mut store = CollectorStore::in_memory(PolicyDocument::default());
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..20 {
            let mut r = crate::shdr::fixtures::random_record(&mut rng);
            r.record_type = RecordType::Alert;
            store.ingest_realtime(&shdr::encode(&r)).unwrap();
        }
        let stamps: Vec<f64> = store.alerts().iter().map(|(t, _)| *t).collect();
        assert!(stamps.windows(2).all(|w| w[0] <= w[1]));
    }
}
