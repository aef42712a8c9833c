//! Smart Home Detail Record: the line-oriented record format written to
//! batch files and shipped to the collector.
//!
//! Encoding is canonical single-line JSON with fixed field order; decoding
//! tolerates unknown fields (counted) so the schema can evolve.

use std::collections::BTreeSet;
use std::fs;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::Transport;
use crate::flow::Session;
use crate::http::HttpGetInfo;
use crate::mda::AwarenessLabels;
use crate::qos::QosSnapshot;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordType {
    Session,
    Qos,
    Alert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShdrRecord {
    pub record_type: RecordType,
    pub ts_first: f64,
    pub ts_last: f64,
    pub src_mac: String,
    pub dst_mac: String,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub transport: Transport,
    pub byte_count_up: u64,
    pub byte_count_down: u64,
    pub pkt_count_up: u64,
    pub pkt_count_down: u64,
    pub labels: AwarenessLabels,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub http: Option<HttpGetInfo>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub qos: Option<QosSnapshot>,
    pub policy_version: u64,
    pub gateway_id: String,
}

const KNOWN_FIELDS: [&str; 19] = [
    "record_type",
    "ts_first",
    "ts_last",
    "src_mac",
    "dst_mac",
    "src_ip",
    "dst_ip",
    "src_port",
    "dst_port",
    "transport",
    "byte_count_up",
    "byte_count_down",
    "pkt_count_up",
    "pkt_count_down",
    "labels",
    "http",
    "qos",
    "policy_version",
    "gateway_id",
];

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("malformed line: {0}")]
    MalformedLine(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn mac_string(mac: &[u8; 6]) -> String {
    mac.iter()
        .map(|b| format!("{b:02x}"))
        .collect::<Vec<_>>()
        .join(":")
}

/// Projects an expired, classified session into a record. HTTP subfields are
/// copied only when the head parse completed.
pub fn build_record(
    s: &Session,
    labels: AwarenessLabels,
    policy_version: u64,
    gateway_id: &str,
    alert_apps: &BTreeSet<String>,
) -> ShdrRecord {
    let record_type = if alert_apps.contains(&labels.application) {
        RecordType::Alert
    } else {
        RecordType::Session
    };
    let (dst_ip, dst_port) = if s.key.endpoint_a == s.initiator {
        s.key.endpoint_b
    } else {
        s.key.endpoint_a
    };
    let http = s
        .http_stream
        .info()
        .filter(|info| info.complete)
        .cloned();
    ShdrRecord {
        record_type,
        ts_first: s.first_ts,
        ts_last: s.last_ts,
        src_mac: mac_string(&s.initiator_mac),
        dst_mac: mac_string(&s.responder_mac),
        src_ip: s.initiator.0,
        dst_ip,
        src_port: s.initiator.1,
        dst_port,
        transport: s.key.transport,
        byte_count_up: s.byte_count_up,
        byte_count_down: s.byte_count_down,
        pkt_count_up: s.pkt_count_up,
        pkt_count_down: s.pkt_count_down,
        labels,
        http,
        qos: None,
        policy_version,
        gateway_id: gateway_id.to_string(),
    }
}

/// Wraps a closed QoS window as a record.
pub fn qos_record(snapshot: QosSnapshot, policy_version: u64, gateway_id: &str) -> ShdrRecord {
    ShdrRecord {
        record_type: RecordType::Qos,
        ts_first: snapshot.window_start,
        ts_last: snapshot.window_end,
        src_mac: mac_string(&[0; 6]),
        dst_mac: mac_string(&[0; 6]),
        src_ip: Ipv4Addr::UNSPECIFIED,
        dst_ip: Ipv4Addr::UNSPECIFIED,
        src_port: 0,
        dst_port: 0,
        transport: Transport::Other,
        byte_count_up: 0,
        byte_count_down: 0,
        pkt_count_up: 0,
        pkt_count_down: 0,
        labels: AwarenessLabels::unknown_for(Ipv4Addr::UNSPECIFIED),
        http: None,
        qos: Some(snapshot),
        policy_version,
        gateway_id: gateway_id.to_string(),
    }
}

/// One newline-terminated line of canonical text.
pub fn encode(r: &ShdrRecord) -> String {
    let mut line = serde_json::to_string(r).expect("record is always serializable");
    line.push('\n');
    line
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct DecodeStats {
    pub unknown_fields: u64,
}

/// Inverse of [`encode`]. Unknown fields are ignored and counted in `stats`.
pub fn decode(line: &str, stats: &mut DecodeStats) -> Result<ShdrRecord, CodecError> {
    let value: serde_json::Value = serde_json::from_str(line.trim_end_matches('\n'))
        .map_err(|e| CodecError::MalformedLine(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| CodecError::MalformedLine("not an object".into()))?;
    for key in obj.keys() {
        if !KNOWN_FIELDS.contains(&key.as_str()) {
            stats.unknown_fields += 1;
        }
    }
    let record: ShdrRecord = serde_json::from_value(value)
        .map_err(|e| CodecError::MalformedLine(e.to_string()))?;
    if record.ts_first > record.ts_last {
        return Err(CodecError::SchemaViolation(format!(
            "ts_first {} > ts_last {}",
            record.ts_first, record.ts_last
        )));
    }
    if let Some(http) = &record.http {
        if http.url.contains(['\r', '\n']) {
            return Err(CodecError::SchemaViolation("url contains CR/LF".into()));
        }
    }
    Ok(record)
}

/// First line of every batch file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchHeader {
    pub schema_version: u32,
    pub gateway_id: String,
    pub window_start: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub path: PathBuf,
    pub filename: String,
    pub count: usize,
    pub bytes: u64,
}

pub fn batch_filename(gateway_id: &str, window_start: f64) -> String {
    format!("shdr-{gateway_id}-{}.log", window_start as u64)
}

/// Writes records as a self-describing batch file, via a temporary name and
/// an atomic rename. Zero records produce no file.
pub fn write_batch_file(
    records: &[ShdrRecord],
    dir: &Path,
    gateway_id: &str,
    window_start: f64,
) -> Result<Option<BatchSummary>, CodecError> {
    if records.is_empty() {
        return Ok(None);
    }
    fs::create_dir_all(dir)?;
    let filename = batch_filename(gateway_id, window_start);
    let final_path = dir.join(&filename);
    let tmp_path = dir.join(format!("{filename}.tmp"));
    let mut body = serde_json::to_string(&BatchHeader {
        schema_version: SCHEMA_VERSION,
        gateway_id: gateway_id.to_string(),
        window_start,
    })
    .expect("header serializable");
    body.push('\n');
    for r in records {
        body.push_str(&encode(r));
    }
    fs::write(&tmp_path, &body)?;
    fs::rename(&tmp_path, &final_path)?;
    Ok(Some(BatchSummary {
        path: final_path,
        filename,
        count: records.len(),
        bytes: body.len() as u64,
    }))
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct BatchDecodeStats {
    pub malformed: u64,
    pub schema_violations: u64,
    pub unknown_fields: u64,
}

/// Decodes a batch file body. Malformed record lines are counted, never
/// aborting the batch; a bad header rejects the whole file.
pub fn decode_batch(
    body: &str,
) -> Result<(BatchHeader, Vec<ShdrRecord>, BatchDecodeStats), CodecError> {
    let mut lines = body.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| CodecError::MalformedLine("empty batch".into()))?;
    let header: BatchHeader = serde_json::from_str(header_line)
        .map_err(|e| CodecError::MalformedLine(format!("bad batch header: {e}")))?;
    let mut stats = BatchDecodeStats::default();
    let mut records = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut dstats = DecodeStats::default();
        match decode(line, &mut dstats) {
            Ok(r) => records.push(r),
            Err(CodecError::SchemaViolation(_)) => stats.schema_violations += 1,
            Err(_) => stats.malformed += 1,
        }
        stats.unknown_fields += dstats.unknown_fields;
    }
    Ok((header, records, stats))
}

/// Deterministic pseudo-random record generator for round-trip checks.
pub mod fixtures {
    use super::*;
    use crate::mda::{
        Confidence, DeviceType, LocationInfo, ServiceClass, SubscriberDerivation, SubscriberInfo,
    };
    use rand::rngs::StdRng;
    use rand::Rng;

    pub fn random_record(rng: &mut StdRng) -> ShdrRecord {
        let services = [
            ServiceClass::Http,
            ServiceClass::P2p,
            ServiceClass::Dns,
            ServiceClass::ProprietaryIot,
            ServiceClass::Other,
        ];
        let devices = [
            DeviceType::Smartphone,
            DeviceType::Pad,
            DeviceType::Pc,
            DeviceType::TvBox,
            DeviceType::GameConsole,
            DeviceType::IotSensor,
            DeviceType::Unknown,
        ];
        let kinds = [RecordType::Session, RecordType::Qos, RecordType::Alert];
        // Timestamps must survive encode/decode byte-for-byte; pin them to the
        // serializer's own representation so they are fixed points of the codec.
        let canon = |x: f64| -> f64 {
            serde_json::from_str(&serde_json::to_string(&x).unwrap()).unwrap()
        };
        let ts_first = canon((rng.random_range(0..2_000_000_000u64) as f64) / 1000.0);
        let src_ip = Ipv4Addr::from(rng.random::<u32>());
        let rand_str = |rng: &mut StdRng, with_tricky: bool| -> String {
            let len = rng.random_range(0..20);
            (0..len)
                .map(|_| {
                    let c = rng.random_range(0u32..96);
                    if with_tricky && c < 4 {
                        ['"', '\\', '/', '\u{7f}'][c as usize]
                    } else {
                        char::from_u32(32 + rng.random_range(0..95)).unwrap()
                    }
                })
                .collect()
        };
        let http = if rng.random_bool(0.5) {
            Some(HttpGetInfo {
                url: format!("/{}", rand_str(rng, true).replace(' ', "_")),
                host: rand_str(rng, true),
                user_agent: rand_str(rng, true),
                referer: rand_str(rng, true),
                complete: true,
            })
        } else {
            None
        };
        let labels = AwarenessLabels {
            service: services[rng.random_range(0..services.len())],
            application: rand_str(rng, false),
            action: rand_str(rng, false),
            device_type: devices[rng.random_range(0..devices.len())],
            device_brand: rand_str(rng, true),
            device_os: rand_str(rng, false),
            provider: rand_str(rng, false),
            location: LocationInfo {
                subnet_tag: rand_str(rng, false),
                dhcp_segment: rand_str(rng, false),
                access_point: rand_str(rng, false),
            },
            subscriber: SubscriberInfo {
                subscriber_id: rand_str(rng, true),
                derivation: [
                    SubscriberDerivation::AccountMap,
                    SubscriberDerivation::DhcpSegment,
                    SubscriberDerivation::IpFallback,
                ][rng.random_range(0..3)],
            },
            confidence: Confidence {
                service: rng.random_range(0..=100) as f64 / 100.0,
                application: rng.random_range(0..=100) as f64 / 100.0,
                device: rng.random_range(0..=100) as f64 / 100.0,
                provider: rng.random_range(0..=100) as f64 / 100.0,
                location: rng.random_range(0..=100) as f64 / 100.0,
                subscriber: rng.random_range(0..=100) as f64 / 100.0,
            },
        };
        let mut mac = [0u8; 6];
        rng.fill(&mut mac);
        let mut mac2 = [0u8; 6];
        rng.fill(&mut mac2);
        ShdrRecord {
            record_type: kinds[rng.random_range(0..kinds.len())],
            ts_first,
            ts_last: canon(ts_first + rng.random_range(0..3_600_000u64) as f64 / 1000.0),
            src_mac: mac_string(&mac),
            dst_mac: mac_string(&mac2),
            src_ip,
            dst_ip: Ipv4Addr::from(rng.random::<u32>()),
            src_port: rng.random(),
            dst_port: rng.random(),
            transport: [Transport::Tcp, Transport::Udp, Transport::Other]
                [rng.random_range(0..3)],
            byte_count_up: rng.random_range(0..1_000_000_000),
            byte_count_down: rng.random_range(0..1_000_000_000),
            pkt_count_up: rng.random_range(0..1_000_000),
            pkt_count_down: rng.random_range(0..1_000_000),
            labels,
            http,
            qos: None,
            policy_version: rng.random_range(0..1000),
            gateway_id: format!("gw-{}", rng.random_range(0..10_000)),
        }
    }
}
