//! Deterministic synthetic traffic: labeled pcap corpora for accuracy checks
//! and high-rate GET load for throughput benchmarks.
//!
//! Each generated session carries a truth sidecar line recording the labels
//! the generator intended, derived from the emitting device profile — not
//! from running the classifier.

use std::net::Ipv4Addr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::capture::{Transport, TCP_ACK, TCP_FIN, TCP_SYN};
use crate::framebuf::{FrameBuilder, PcapWriter};
use crate::mda::{
    AwarenessLabels, Confidence, DeviceType, LocationInfo, ServiceClass, SubscriberDerivation,
    SubscriberInfo,
};

/// Signature database shipped with the gateway; the generator's device
/// profiles are built to exercise every rule in it.
pub const DEFAULT_SIGNATURES: &str = include_str!("../../../config/signatures.toml");

pub const GATEWAY_MAC: [u8; 6] = [0x02, 0x42, 0xc0, 0xa8, 0x01, 0x01];

const PHONE_UA: &str = "Mozilla/5.0 (Linux; Android 4.0.4; GT-I9300 Build/IMM76D) AppleWebKit/534.30 (KHTML, like Gecko) Version/4.0 Mobile Safari/534.30";
const TV_UA: &str = "Mozilla/5.0 (SmartTV; Linux; Tizen 2.3) AppleWebKit/538.1 (KHTML, like Gecko)";
const PC_UA: &str = "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/90.0.4430.93 Safari/537.36";

/// Expected labels for one generated session, keyed by its 5-tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_ip: Ipv4Addr,
    pub dst_port: u16,
    pub transport: Transport,
    pub labels: AwarenessLabels,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub pcap: Vec<u8>,
    /// One JSON [`TruthRecord`] line per generated session.
    pub truth: String,
    pub sessions: usize,
    pub get_count: u64,
}

impl Corpus {
    pub fn truth_records(&self) -> Vec<TruthRecord> {
        self.truth
            .lines()
            .map(|l| serde_json::from_str(l).expect("truth line"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusSpec {
    pub sessions: usize,
    pub seed: u64,
    pub start_ts: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            sessions: 400,
            seed: 7,
            start_ts: 1_700_000_000.0,
        }
    }
}

struct Device {
    ip: Ipv4Addr,
    mac: [u8; 6],
    device_type: DeviceType,
    brand: &'static str,
}

fn devices() -> [Device; 5] {
    let ip = |last: u8| Ipv4Addr::new(192, 168, 1, last);
    [
        Device {
            ip: ip(2),
            mac: [0x3c, 0x5a, 0xb4, 0x00, 0x00, 0x01],
            device_type: DeviceType::Smartphone,
            brand: "generic_android",
        },
        Device {
            ip: ip(3),
            mac: [0xf0, 0x27, 0x2d, 0x00, 0x00, 0x02],
            device_type: DeviceType::TvBox,
            brand: "streambox",
        },
        Device {
            ip: ip(4),
            mac: [0xd0, 0x52, 0xa8, 0x00, 0x00, 0x03],
            device_type: DeviceType::IotSensor,
            brand: "lumihome",
        },
        Device {
            ip: ip(5),
            mac: [0xa4, 0xc1, 0x38, 0x00, 0x00, 0x04],
            device_type: DeviceType::IotSensor,
            brand: "smokeco",
        },
        Device {
            ip: ip(6),
            mac: [0x00, 0x1a, 0x2b, 0x00, 0x00, 0x05],
            device_type: DeviceType::Pc,
            brand: "generic_pc",
        },
    ]
}

/// Baseline LAN labels for a device: context dimensions filled in, traffic
/// dimensions left for the profile to set.
fn lan_labels(dev: &Device) -> AwarenessLabels {
    let (subscriber_id, derivation) = if dev.ip.octets()[3] == 2 {
        ("home-account-1".to_string(), SubscriberDerivation::AccountMap)
    } else {
        (format!("lan-1/{}", dev.ip), SubscriberDerivation::DhcpSegment)
    };
    AwarenessLabels {
        service: ServiceClass::Other,
        application: "unknown".into(),
        action: "unknown".into(),
        device_type: dev.device_type,
        device_brand: dev.brand.into(),
        device_os: String::new(),
        provider: String::new(),
        location: LocationInfo {
            subnet_tag: "lan-1".into(),
            dhcp_segment: "lan-1".into(),
            access_point: "ap-1".into(),
        },
        subscriber: SubscriberInfo {
            subscriber_id,
            derivation,
        },
        confidence: Confidence {
            service: 1.0,
            application: 1.0,
            device: 1.0,
            provider: 1.0,
            location: 1.0,
            subscriber: 1.0,
        },
    }
}

type Frames = Vec<(f64, Vec<u8>)>;

fn get_request(url: &str, host: &str, ua: &str, referer: &str) -> Vec<u8> {
    let mut req = format!("GET {url} HTTP/1.1\r\nHost: {host}\r\n");
    if !ua.is_empty() {
        req.push_str(&format!("User-Agent: {ua}\r\n"));
    }
    if !referer.is_empty() {
        req.push_str(&format!("Referer: {referer}\r\n"));
    }
    req.push_str("Accept: */*\r\nConnection: close\r\n\r\n");
    req.into_bytes()
}

/// Full TCP exchange: handshake, optional client payload, server response
/// packets, FIN in both directions.
#[allow(clippy::too_many_arguments)]
fn tcp_session(
    frames: &mut Frames,
    t0: f64,
    client_ip: Ipv4Addr,
    client_mac: [u8; 6],
    client_port: u16,
    server_ip: Ipv4Addr,
    server_port: u16,
    request: &[u8],
    resp_pkts: usize,
    resp_len: usize,
) {
    let up = |flags: u8, payload: &[u8]| {
        FrameBuilder::tcp(
            client_mac, GATEWAY_MAC, client_ip, server_ip, client_port, server_port, flags, payload,
        )
    };
    let down = |flags: u8, payload: &[u8]| {
        FrameBuilder::tcp(
            GATEWAY_MAC, client_mac, server_ip, client_ip, server_port, client_port, flags, payload,
        )
    };
    frames.push((t0, up(TCP_SYN, &[])));
    frames.push((t0 + 0.002, down(TCP_SYN | TCP_ACK, &[])));
    frames.push((t0 + 0.004, up(TCP_ACK, &[])));
    if !request.is_empty() {
        frames.push((t0 + 0.005, up(TCP_ACK, request)));
    }
    let body = vec![0x42u8; resp_len];
    for k in 0..resp_pkts {
        frames.push((t0 + 0.010 + k as f64 * 0.005, down(TCP_ACK, &body)));
    }
    let end = t0 + 0.010 + resp_pkts as f64 * 0.005;
    frames.push((end + 0.002, up(TCP_FIN | TCP_ACK, &[])));
    frames.push((end + 0.004, down(TCP_FIN | TCP_ACK, &[])));
}

fn truth(
    dev: &Device,
    sport: u16,
    dst_ip: Ipv4Addr,
    dst_port: u16,
    transport: Transport,
    labels: AwarenessLabels,
) -> TruthRecord {
    TruthRecord {
        src_ip: dev.ip,
        src_port: sport,
        dst_ip,
        dst_port,
        transport,
        labels,
    }
}

/// Emits one session of profile `i % 8`; returns its truth and GET count.
fn emit_profile(i: usize, sport: u16, t0: f64, frames: &mut Frames) -> (TruthRecord, u64) {
    let devs = devices();
    match i % 8 {
        // Smartphone watching video behind a known host suffix.
        0 => {
            let dev = &devs[0];
            let server = Ipv4Addr::new(198, 51, 100, 10);
            let req = get_request(&format!("/watch/clip{i}"), "cdn.streamhub.example", PHONE_UA, "");
            tcp_session(frames, t0, dev.ip, dev.mac, sport, server, 80, &req, 3, 900);
            let mut l = lan_labels(dev);
            l.service = ServiceClass::Http;
            l.application = "video_streaming".into();
            l.provider = "streamhub".into();
            l.device_os = "android".into();
            (truth(dev, sport, server, 80, Transport::Tcp, l), 1)
        }
        // Smartphone searching a shop (action keyword rule).
        1 => {
            let dev = &devs[0];
            let server = Ipv4Addr::new(198, 51, 100, 15);
            let req = get_request(
                &format!("/search?q=lamp{i}"),
                "shop.martport.example",
                PHONE_UA,
                "http://shop.martport.example/",
            );
            tcp_session(frames, t0, dev.ip, dev.mac, sport, server, 80, &req, 2, 700);
            let mut l = lan_labels(dev);
            l.service = ServiceClass::Http;
            l.application = "online_shopping".into();
            l.action = "searching".into();
            l.provider = "martport".into();
            l.device_os = "android".into();
            (truth(dev, sport, server, 80, Transport::Tcp, l), 1)
        }
        // Smartphone fetching flash video by extension; provider via IP table.
        2 => {
            let dev = &devs[0];
            let server = Ipv4Addr::new(198, 51, 100, 20);
            let req = get_request(&format!("/v/clip{i}.swf"), "img.webco.example", PHONE_UA, "");
            tcp_session(frames, t0, dev.ip, dev.mac, sport, server, 80, &req, 4, 1100);
            let mut l = lan_labels(dev);
            l.service = ServiceClass::Http;
            l.application = "video_streaming".into();
            l.provider = "webco".into();
            l.device_os = "android".into();
            (truth(dev, sport, server, 80, Transport::Tcp, l), 1)
        }
        // TV box streaming; rotates across the video extensions.
        3 => {
            let dev = &devs[1];
            let server = Ipv4Addr::new(198, 51, 100, 30);
            let ext = ["mov", "asf", "3gp"][(i / 8) % 3];
            let req = get_request(&format!("/ep{i}.{ext}"), "vod.example.net", TV_UA, "");
            tcp_session(frames, t0, dev.ip, dev.mac, sport, server, 80, &req, 5, 1300);
            let mut l = lan_labels(dev);
            l.service = ServiceClass::Http;
            l.application = "video_streaming".into();
            l.provider = "vodco".into();
            l.device_os = "linux".into();
            (truth(dev, sport, server, 80, Transport::Tcp, l), 1)
        }
        // Smart light keeping an encrypted control channel to its cloud.
        4 => {
            let dev = &devs[2];
            let server = Ipv4Addr::new(203, 0, 113, if (i / 8) % 2 == 0 { 10 } else { 11 });
            let hello = [
                0x10, 0x18, 0x00, 0x04, 0x4d, 0x51, 0x54, 0x54, 0x04, 0xc2, 0x00, 0x3c, 0x00,
                0x0a, 0x6c, 0x75, 0x6d, 0x69, 0x2d, 0x6c, 0x69, 0x67, 0x68, 0x74,
            ];
            tcp_session(frames, t0, dev.ip, dev.mac, sport, server, 8883, &hello, 2, 16);
            let mut l = lan_labels(dev);
            l.service = ServiceClass::ProprietaryIot;
            l.application = "smart_lighting".into();
            l.provider = "lumicloud".into();
            (truth(dev, sport, server, 8883, Transport::Tcp, l), 0)
        }
        // Smoke detector heartbeat: fixed 96-byte upstream frames.
        5 => {
            let dev = &devs[3];
            let server = Ipv4Addr::new(198, 51, 100, 77);
            // 54-byte payload => 96 bytes on the wire with eth/ip/udp headers.
            let beat = [0x5a; 54];
            for k in 0..10 {
                frames.push((
                    t0 + k as f64 * 0.3,
                    FrameBuilder::udp(dev.mac, GATEWAY_MAC, dev.ip, server, sport, 7001, &beat),
                ));
            }
            frames.push((
                t0 + 3.0,
                FrameBuilder::udp(GATEWAY_MAC, dev.mac, server, dev.ip, 7001, sport, &[0xa5; 18]),
            ));
            let mut l = lan_labels(dev);
            l.service = ServiceClass::ProprietaryIot;
            l.application = "smoke_alarm".into();
            l.provider = "smokeco".into();
            (truth(dev, sport, server, 7001, Transport::Udp, l), 0)
        }
        // PC downloading an archive.
        6 => {
            let dev = &devs[4];
            let server = Ipv4Addr::new(198, 51, 100, 40);
            let req = get_request(&format!("/files/tool{i}.zip"), "dl.example.org", PC_UA, "");
            tcp_session(frames, t0, dev.ip, dev.mac, sport, server, 80, &req, 6, 1400);
            let mut l = lan_labels(dev);
            l.service = ServiceClass::Http;
            l.application = "file_download".into();
            l.provider = "dlco".into();
            l.device_os = "windows".into();
            (truth(dev, sport, server, 80, Transport::Tcp, l), 1)
        }
        // DNS lookup from a rotating device; no application rule applies.
        _ => {
            let dev = &devs[(i / 8) % 5];
            let resolver = Ipv4Addr::new(8, 8, 8, 8);
            let query = [0x13; 33];
            let answer = [0x37; 90];
            frames.push((
                t0,
                FrameBuilder::udp(dev.mac, GATEWAY_MAC, dev.ip, resolver, sport, 53, &query),
            ));
            frames.push((
                t0 + 0.020,
                FrameBuilder::udp(GATEWAY_MAC, dev.mac, resolver, dev.ip, 53, sport, &answer),
            ));
            let mut l = lan_labels(dev);
            l.service = ServiceClass::Dns;
            l.confidence.application = 0.0;
            l.confidence.provider = 0.0;
            (truth(dev, sport, resolver, 53, Transport::Udp, l), 0)
        }
    }
}

fn finish(mut frames: Frames, truths: Vec<TruthRecord>, get_count: u64) -> Corpus {
    frames.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut w = PcapWriter::new_le();
    for (ts, frame) in &frames {
        w.write_frame(*ts, frame);
    }
    let truth = truths
        .iter()
        .map(|t| {
            let mut line = serde_json::to_string(t).expect("truth serializable");
            line.push('\n');
            line
        })
        .collect();
    Corpus {
        pcap: w.take(),
        truth,
        sessions: truths.len(),
        get_count,
    }
}

/// Generates the labeled mixed-device corpus.
pub fn generate_corpus(spec: &CorpusSpec) -> Corpus {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut frames = Frames::new();
    let mut truths = Vec::with_capacity(spec.sessions);
    let mut gets = 0;
    for i in 0..spec.sessions {
        let t0 = spec.start_ts + i as f64 * 0.01 + rng.random_range(0.0..0.004);
        let sport = 1024 + (i % 60_000) as u16;
        let (t, g) = emit_profile(i, sport, t0, &mut frames);
        truths.push(t);
        gets += g;
    }
    finish(frames, truths, gets)
}

/// Web-browsing corpus where 70% of the URLs carry a default-blocklisted
/// extension; used to exercise policy cleansing.
pub fn generate_web_corpus(sessions: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut frames = Frames::new();
    let mut truths = Vec::with_capacity(sessions);
    let devs = devices();
    let dev = &devs[0];
    let server = Ipv4Addr::new(198, 51, 100, 20);
    let exts = ["js", "css", "png", "jpg", "jpeg", "gif", "ico", "html", "txt", "swf"];
    for i in 0..sessions {
        let t0 = 1_700_000_000.0 + i as f64 * 0.01 + rng.random_range(0.0..0.004);
        let sport = 1024 + (i % 60_000) as u16;
        let ext = exts[i % exts.len()];
        let req = get_request(
            &format!("/assets/item{i}.{ext}"),
            "static.webco.example",
            PHONE_UA,
            "",
        );
        tcp_session(&mut frames, t0, dev.ip, dev.mac, sport, server, 80, &req, 2, 500);
        let mut l = lan_labels(dev);
        l.service = ServiceClass::Http;
        l.device_os = "android".into();
        l.provider = "webco".into();
        match ext {
            "js" | "css" => l.application = "web_static".into(),
            "swf" => l.application = "video_streaming".into(),
            _ => l.confidence.application = 0.0,
        }
        truths.push(truth(dev, sport, server, 80, Transport::Tcp, l));
    }
    let n = sessions as u64;
    finish(frames, truths, n)
}

/// High-rate single-GET sessions from unique client IPs; truth is omitted.
pub fn generate_load(rate: u64, duration: f64, seed: u64) -> Corpus {
    assert!(rate > 0, "rate must be positive");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let total = (rate as f64 * duration).round() as usize;
    let mut frames = Frames::with_capacity(total * 7);
    let start = 1_700_000_000.0;
    let server = Ipv4Addr::new(198, 51, 100, 10);
    for i in 0..total {
        let t0 = start + i as f64 / rate as f64 + rng.random_range(0.0..0.4 / rate as f64);
        let client = Ipv4Addr::new(10, (i >> 16) as u8, (i >> 8) as u8, i as u8);
        let mac = [0x3c, 0x5a, 0xb4, (i >> 16) as u8, (i >> 8) as u8, i as u8];
        let req = get_request(&format!("/clip{i}"), "cdn.streamhub.example", PHONE_UA, "");
        tcp_session(&mut frames, t0, client, mac, 40_000, server, 80, &req, 1, 400);
    }
    finish(frames, Vec::new(), total as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{CaptureSource, SourceKind};
    use crate::flow::{FlowConfig, FlowTable, Session};
    use crate::mda::{classify_all, SignatureDb, DIMENSIONS};
    use std::collections::HashMap;
    use std::io::Cursor;

    fn drain_corpus(corpus: &Corpus) -> Vec<Session> {
        let mut src =
            CaptureSource::from_reader(Cursor::new(corpus.pcap.clone()), SourceKind::Synthetic)
                .unwrap();
        let mut table = FlowTable::new(FlowConfig::default());
        let mut done = Vec::new();
        while let Some(pkt) = src.next_packet().unwrap() {
            let out = table.upsert(&pkt);
            assert!(out.evicted.is_none());
            if let Some(s) = out.closed {
                done.push(s);
            }
        }
        assert_eq!(src.skips.skipped_frames(), 0);
        done.extend(table.drain());
        done
    }

    #[test]
    fn corpus_is_deterministic() {
        let spec = CorpusSpec {
            sessions: 64,
            ..CorpusSpec::default()
        };
        let a = generate_corpus(&spec);
        let b = generate_corpus(&spec);
        assert_eq!(a.pcap, b.pcap);
        assert_eq!(a.truth, b.truth);
        let c = generate_corpus(&CorpusSpec { seed: 8, ..spec });
        assert_ne!(a.pcap, c.pcap);
    }

    #[test]
    fn corpus_decodes_into_expected_session_count() {
        let spec = CorpusSpec {
            sessions: 80,
            ..CorpusSpec::default()
        };
        let corpus = generate_corpus(&spec);
        let sessions = drain_corpus(&corpus);
        assert_eq!(sessions.len(), 80);
        assert_eq!(corpus.truth_records().len(), 80);
        assert_eq!(corpus.get_count, 50); // 5 of every 8 profiles send a GET
    }

    #[test]
    fn classification_matches_truth_on_every_dimension() {
        let spec = CorpusSpec {
            sessions: 400,
            ..CorpusSpec::default()
        };
        let corpus = generate_corpus(&spec);
        let db = SignatureDb::parse(DEFAULT_SIGNATURES).unwrap();
        let by_port: HashMap<u16, TruthRecord> = corpus
            .truth_records()
            .into_iter()
            .map(|t| (t.src_port, t))
            .collect();
        let sessions = drain_corpus(&corpus);
        assert_eq!(sessions.len(), 400);
        for s in &sessions {
            let expect = &by_port[&s.initiator.1];
            assert_eq!(s.initiator.0, expect.src_ip);
            let got = classify_all(s, &db, None);
            for dim in DIMENSIONS {
                assert_eq!(
                    got.dimension_value(dim),
                    expect.labels.dimension_value(dim),
                    "dimension {dim} for session {}:{}",
                    s.initiator.0,
                    s.initiator.1
                );
            }
        }
    }

    #[test]
    fn every_default_rule_is_exercised() {
        let db = SignatureDb::parse(DEFAULT_SIGNATURES).unwrap();
        let corpus = generate_corpus(&CorpusSpec {
            sessions: 120,
            ..CorpusSpec::default()
        });
        let web = generate_web_corpus(30, 9);
        let mut apps = std::collections::HashSet::new();
        let mut providers = std::collections::HashSet::new();
        let mut services = std::collections::HashSet::new();
        let mut device_types = std::collections::HashSet::new();
        let mut brands = std::collections::HashSet::new();
        let mut actions = std::collections::HashSet::new();
        let mut derivations = std::collections::HashSet::new();
        for c in [&corpus, &web] {
            for s in drain_corpus(c) {
                let l = classify_all(&s, &db, None);
                apps.insert(l.application.clone());
                providers.insert(l.provider.clone());
                services.insert(l.service);
                device_types.insert(l.device_type);
                brands.insert(l.device_brand.clone());
                actions.insert(l.action.clone());
                derivations.insert(l.subscriber.derivation);
                assert_eq!(l.location.subnet_tag, "lan-1");
            }
        }
        for app in [
            "video_streaming",
            "online_shopping",
            "smart_lighting",
            "smoke_alarm",
            "file_download",
            "web_static",
        ] {
            assert!(apps.contains(app), "application {app} not exercised");
        }
        for p in ["streamhub", "martport", "webco", "vodco", "lumicloud", "smokeco", "dlco"] {
            assert!(providers.contains(p), "provider {p} not exercised");
        }
        for svc in [
            crate::mda::ServiceClass::Http,
            crate::mda::ServiceClass::Dns,
            crate::mda::ServiceClass::ProprietaryIot,
        ] {
            assert!(services.contains(&svc));
        }
        for dt in [
            DeviceType::Smartphone,
            DeviceType::TvBox,
            DeviceType::IotSensor,
            DeviceType::Pc,
        ] {
            assert!(device_types.contains(&dt));
        }
        for b in ["generic_android", "streambox", "lumihome", "smokeco", "generic_pc"] {
            assert!(brands.contains(b), "brand {b} not exercised");
        }
        assert!(actions.contains("searching"));
        assert!(derivations.contains(&SubscriberDerivation::AccountMap));
        assert!(derivations.contains(&SubscriberDerivation::DhcpSegment));
        assert!(!db.ext_map.is_empty());
    }

    #[test]
    fn web_corpus_blocklist_ratio() {
        let corpus = generate_web_corpus(100, 3);
        let blocked = ["js", "css", "png", "jpg", "jpeg", "gif", "ico"];
        let n = corpus
            .truth_records()
            .len();
        assert_eq!(n, 100);
        // 7 of each 10 extensions cycle through the default blocklist.
        let sessions = drain_corpus(&corpus);
        let hit = sessions
            .iter()
            .filter(|s| {
                let url = &s.http_stream.info().unwrap().url;
                blocked.iter().any(|b| url.ends_with(&format!(".{b}")))
            })
            .count();
        assert_eq!(hit, 70);
    }

    #[test]
    fn load_generator_counts_and_determinism() {
        let a = generate_load(500, 2.0, 1);
        assert_eq!(a.get_count, 1000);
        let b = generate_load(500, 2.0, 1);
        assert_eq!(a.pcap, b.pcap);
        let sessions = drain_corpus(&a);
        assert_eq!(sessions.len(), 1000);
        let with_get = sessions
            .iter()
            .filter(|s| s.http_stream.info().map(|i| i.complete).unwrap_or(false))
            .count();
        assert_eq!(with_get, 1000);
    }
}
