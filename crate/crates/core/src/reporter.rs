//! Data report interface: buffered batch upload of SHDR files plus a
//! low-latency realtime channel for alerts.
//!
//! Buffers are bounded and never block the packet path: under pressure the
//! oldest record is dropped and counted. Batch uploads are at-least-once
//! with filename-based idempotence at the collector.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use thiserror::Error;

use crate::policy::{PolicyDocument, ReportMethod};
use crate::shdr::{self, RecordType, ShdrRecord};

pub const BACKOFF_BASE_SECS: f64 = 2.0;
pub const BACKOFF_CAP_SECS: f64 = 300.0;
pub const REALTIME_ATTEMPTS: u32 = 3;
pub const REALTIME_TIMEOUT: Duration = Duration::from_secs(1);

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("upload failed with status {0}")]
    UploadFailed(u16),
    #[error("upload transport error: {0}")]
    Transport(String),
    #[error("persist failed: {0}")]
    PersistFailed(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportStats {
    pub submitted: u64,
    pub sent_batches: u64,
    pub sent_batch_records: u64,
    pub sent_realtime: u64,
    pub dropped_batch: u64,
    pub dropped_realtime: u64,
    pub retries: u64,
    pub spilled_realtime: u64,
    pub persist_failures: u64,
    pub pending_files: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubmitResult {
    Accepted,
    DroppedOldest(String),
}

#[derive(Debug, Clone)]
pub struct ReporterConfig {
    pub batch_capacity: usize,
    pub realtime_capacity: usize,
    pub out_dir: PathBuf,
    pub collector_url: Option<String>,
    pub gateway_id: String,
}

impl ReporterConfig {
    pub fn offline(out_dir: PathBuf, gateway_id: &str) -> Self {
        ReporterConfig {
            batch_capacity: 10_000,
            realtime_capacity: 256,
            out_dir,
            collector_url: None,
            gateway_id: gateway_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RetryState {
    attempts: u32,
    next_retry: Option<f64>,
}

/// Jittered exponential backoff: base 2 s doubling, capped at 5 min.
pub fn backoff_delay<R: Rng>(attempts: u32, rng: &mut R) -> f64 {
    let exp = BACKOFF_BASE_SECS * 2f64.powi(attempts.min(16) as i32);
    let capped = exp.min(BACKOFF_CAP_SECS);
    let jitter = rng.random_range(-0.25..=0.25);
    capped * (1.0 + jitter)
}

pub struct ReportQueue {
    pub config: ReporterConfig,
    batch_buffer: VecDeque<ShdrRecord>,
    realtime_buffer: VecDeque<ShdrRecord>,
    pending_files: Vec<PathBuf>,
    retry: RetryState,
    pub stats: ReportStats,
    rng: rand_chacha::ChaCha8Rng,
    agent: ureq::Agent,
    epoch: Instant,
}

impl ReportQueue {
    pub fn new(config: ReporterConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(5))
            .build();
        ReportQueue {
            config,
            batch_buffer: VecDeque::new(),
            realtime_buffer: VecDeque::new(),
            pending_files: Vec::new(),
            retry: RetryState::default(),
            stats: ReportStats::default(),
            rng: rand::SeedableRng::seed_from_u64(0x5eed),
            agent,
            epoch: Instant::now(),
        }
    }

    fn mono_now(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64()
    }

    pub fn batch_len(&self) -> usize {
        self.batch_buffer.len()
    }

    pub fn realtime_len(&self) -> usize {
        self.realtime_buffer.len()
    }

    pub fn estimated_bytes(&self) -> usize {
        // Flat estimate per buffered record; encoded SHDR lines run ~400 B.
        (self.batch_buffer.len() + self.realtime_buffer.len()) * 512
    }

    /// Routes a policy-passed record to the realtime or batch buffer.
    /// Drops (oldest first) are data, not errors.
    pub fn submit(&mut self, r: ShdrRecord) -> SubmitResult {
        self.stats.submitted += 1;
        if r.record_type == RecordType::Alert {
            if self.realtime_buffer.len() >= self.config.realtime_capacity {
                self.realtime_buffer.pop_front();
                self.stats.dropped_realtime += 1;
                eprintln!(
                    "reporter: realtime buffer full, dropped oldest alert (total {})",
                    self.stats.dropped_realtime
                );
                self.realtime_buffer.push_back(r);
                return SubmitResult::DroppedOldest("realtime-full".into());
            }
            self.realtime_buffer.push_back(r);
        } else {
            if self.batch_buffer.len() >= self.config.batch_capacity {
                self.batch_buffer.pop_front();
                self.stats.dropped_batch += 1;
                self.batch_buffer.push_back(r);
                return SubmitResult::DroppedOldest("batch-full".into());
            }
            self.batch_buffer.push_back(r);
        }
        SubmitResult::Accepted
    }

    pub fn batch_due(&self, policy: &PolicyDocument) -> bool {
        self.batch_buffer.len() >= policy.batch_max_records
    }

    fn pending_dir(&self) -> PathBuf {
        self.config.out_dir.join("pending")
    }

    fn archive_dir(&self) -> PathBuf {
        self.config.out_dir.join("archive")
    }

    /// Writes buffered records to a batch file and, when a collector is
    /// configured, uploads it. Failed uploads stay in the pending directory
    /// with exponential backoff.
    pub fn flush_batch(
        &mut self,
        policy: &PolicyDocument,
        window_start: f64,
    ) -> Result<Option<shdr::BatchSummary>, ReportError> {
        if self.batch_buffer.is_empty() {
            return Ok(None);
        }
        let records: Vec<ShdrRecord> = self.batch_buffer.drain(..).collect();
        let dir = if self.config.collector_url.is_some() {
            self.pending_dir()
        } else {
            self.config.out_dir.clone()
        };
        let summary =
            shdr::write_batch_file(&records, &dir, &self.config.gateway_id, window_start)
                .map_err(|e| {
                    self.stats.persist_failures += 1;
                    ReportError::PersistFailed(e.to_string())
                })?
                .expect("non-empty batch produces a file");
        self.stats.sent_batch_records += summary.count as u64;
        if self.config.collector_url.is_some() {
            match self.upload_file(&summary.path, &summary.filename, policy.report_method) {
                Ok(()) => {
                    self.archive(&summary.path)?;
                    self.stats.sent_batches += 1;
                    self.retry = RetryState::default();
                }
                Err(e) => {
                    self.pending_files.push(summary.path.clone());
                    self.stats.pending_files = self.pending_files.len() as u64;
                    self.schedule_retry();
                    eprintln!("reporter: batch upload failed ({e}), will retry");
                }
            }
        } else {
            self.stats.sent_batches += 1;
        }
        Ok(Some(summary))
    }

    fn schedule_retry(&mut self) {
        let delay = backoff_delay(self.retry.attempts, &mut self.rng);
        self.retry.attempts += 1;
        self.retry.next_retry = Some(self.mono_now() + delay);
    }

    pub fn next_retry_in(&self) -> Option<f64> {
        self.retry.next_retry.map(|t| t - self.mono_now())
    }

    pub fn has_pending(&self) -> bool {
        !self.pending_files.is_empty()
    }

    /// Retries pending batch files whose backoff has elapsed. The collector
    /// dedupes by filename, so a re-upload after a lost ack is harmless.
    pub fn retry_pending(&mut self, policy: &PolicyDocument) {
        if self.pending_files.is_empty() {
            return;
        }
        if let Some(next) = self.retry.next_retry {
            if self.mono_now() < next {
                return;
            }
        }
        self.stats.retries += 1;
        let files = std::mem::take(&mut self.pending_files);
        let mut still_pending = Vec::new();
        for path in files {
            let filename = path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default();
            match self.upload_file(&path, &filename, policy.report_method) {
                Ok(()) => {
                    if self.archive(&path).is_ok() {
                        self.stats.sent_batches += 1;
                    }
                }
                Err(_) => still_pending.push(path),
            }
        }
        if still_pending.is_empty() {
            self.retry = RetryState::default();
        } else {
            self.schedule_retry();
        }
        self.pending_files = still_pending;
        self.stats.pending_files = self.pending_files.len() as u64;
    }

    fn archive(&self, path: &Path) -> Result<(), ReportError> {
        let archive = self.archive_dir();
        fs::create_dir_all(&archive)
            .and_then(|_| {
                fs::rename(path, archive.join(path.file_name().unwrap_or_default()))
            })
            .map_err(|e| ReportError::PersistFailed(e.to_string()))
    }

    fn upload_file(
        &self,
        path: &Path,
        filename: &str,
        method: ReportMethod,
    ) -> Result<(), ReportError> {
        let body =
            fs::read(path).map_err(|e| ReportError::PersistFailed(e.to_string()))?;
        let url = format!(
            "{}/shdr/batch",
            self.config.collector_url.as_deref().unwrap_or_default()
        );
        let resp = self
            .agent
            .request(method.as_str(), &url)
            .set("X-Shdr-Filename", filename)
            .set("X-Gateway-Id", &self.config.gateway_id)
            .send_bytes(&body);
        match resp {
            Ok(_) => Ok(()),
            Err(ureq::Error::Status(code, _)) => Err(ReportError::UploadFailed(code)),
            Err(e) => Err(ReportError::Transport(e.to_string())),
        }
    }

    /// Sends each buffered realtime record individually with a 1 s attempt
    /// timeout; after three failures the record spills into the batch path.
    pub fn send_realtime(&mut self, policy: &PolicyDocument) {
        if self.realtime_buffer.is_empty() {
            return;
        }
        let url = match &self.config.collector_url {
            Some(base) => format!("{base}/shdr/realtime"),
            None => {
                // Offline: degrade straight to the batch path.
                while let Some(r) = self.realtime_buffer.pop_front() {
                    self.stats.spilled_realtime += 1;
                    self.spill(r);
                }
                return;
            }
        };
        let agent = ureq::AgentBuilder::new().timeout(REALTIME_TIMEOUT).build();
        while let Some(r) = self.realtime_buffer.pop_front() {
            let line = shdr::encode(&r);
            let mut delivered = false;
            for attempt in 0..REALTIME_ATTEMPTS {
                let resp = agent
                    .request(policy.report_method.as_str(), &url)
                    .set("X-Gateway-Id", &self.config.gateway_id)
                    .send_string(&line);
                match resp {
                    Ok(_) => {
                        delivered = true;
                        break;
                    }
                    Err(_) if attempt + 1 < REALTIME_ATTEMPTS => {
                        self.stats.retries += 1;
                    }
                    Err(_) => {}
                }
            }
            if delivered {
                self.stats.sent_realtime += 1;
            } else {
                self.stats.spilled_realtime += 1;
                self.spill(r);
            }
        }
    }

    fn spill(&mut self, r: ShdrRecord) {
        if self.batch_buffer.len() >= self.config.batch_capacity {
            self.batch_buffer.pop_front();
            self.stats.dropped_batch += 1;
        }
        self.batch_buffer.push_back(r);
    }
}
