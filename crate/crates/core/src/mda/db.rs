//! Signature database: the deterministic rule sets behind service,
//! application, device, provider, location, and subscriber awareness.
//!
//! Loaded from a key-sectioned TOML file (see docs/signatures.md); the
//! version field is mandatory and must increase across updates.

use std::collections::{HashMap, HashSet};
use std::net::Ipv4Addr;
use std::path::Path;

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use crate::capture::Transport;

use super::{DeviceType, ServiceClass};

#[derive(Debug, Error)]
pub enum DbError {
    #[error("signature file not readable: {0}")]
    Io(#[from] std::io::Error),
    #[error("signature file syntax: {0}")]
    Syntax(String),
    #[error("signature file invalid: {0}")]
    Validation(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDb {
    version: u64,
    #[serde(default)]
    ports: Vec<RawPort>,
    #[serde(default)]
    extensions: Vec<RawExt>,
    #[serde(default)]
    hosts: Vec<RawHost>,
    #[serde(default)]
    ip_sets: Vec<RawIpSet>,
    #[serde(default)]
    ua_rules: Vec<RawUaRule>,
    #[serde(default)]
    oui: Vec<RawOui>,
    #[serde(default)]
    fixed_len: Vec<RawFixedLen>,
    #[serde(default)]
    subnets: Vec<RawSubnet>,
    #[serde(default)]
    leases: Vec<RawLease>,
    #[serde(default)]
    accounts: Vec<RawAccount>,
    #[serde(default)]
    provider_ips: Vec<RawProviderIp>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPort {
    transport: String,
    port: u16,
    service: ServiceClass,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExt {
    ext: String,
    application: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRule {
    pub keyword: String,
    pub action: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHost {
    suffix: String,
    application: String,
    #[serde(default)]
    provider: String,
    #[serde(default)]
    actions: Vec<ActionRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIpSet {
    name: String,
    application: String,
    #[serde(default)]
    provider: String,
    ips: Vec<Ipv4Addr>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUaRule {
    #[serde(default)]
    contains: Option<String>,
    #[serde(default)]
    regex: Option<String>,
    device_type: DeviceType,
    #[serde(default)]
    brand: String,
    #[serde(default)]
    os: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOui {
    prefix: String,
    device_type: DeviceType,
    #[serde(default)]
    brand: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFixedLen {
    direction: String,
    length: u32,
    min_packets: u64,
    application: String,
    #[serde(default)]
    provider: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubnet {
    cidr: String,
    tag: String,
    #[serde(default)]
    access_point: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLease {
    ip: Ipv4Addr,
    segment: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAccount {
    ip: Ipv4Addr,
    subscriber_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProviderIp {
    ip: Ipv4Addr,
    provider: String,
}

#[derive(Debug, Clone)]
pub struct HostRule {
    pub suffix: String,
    pub application: String,
    pub provider: String,
    pub actions: Vec<ActionRule>,
}

#[derive(Debug, Clone)]
pub struct IpSetRule {
    pub name: String,
    pub application: String,
    pub provider: String,
    pub ips: HashSet<Ipv4Addr>,
}

#[derive(Debug, Clone)]
pub enum UaMatcher {
    Contains(String),
    Anchored(Regex),
}

impl UaMatcher {
    pub fn matches(&self, ua: &str) -> bool {
        match self {
            UaMatcher::Contains(s) => ua.contains(s.as_str()),
            UaMatcher::Anchored(re) => re.is_match(ua),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UaRule {
    pub matcher: UaMatcher,
    pub device_type: DeviceType,
    pub brand: String,
    pub os: String,
}

#[derive(Debug, Clone)]
pub struct FixedLenRule {
    pub upstream: bool,
    pub length: u32,
    pub min_packets: u64,
    pub application: String,
    pub provider: String,
}

#[derive(Debug, Clone)]
pub struct SubnetRule {
    pub network: u32,
    pub prefix_len: u8,
    pub tag: String,
    pub access_point: String,
}

impl SubnetRule {
    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        let addr = u32::from(ip);
        let mask = if self.prefix_len == 0 {
            0
        } else {
            u32::MAX << (32 - self.prefix_len)
        };
        addr & mask == self.network & mask
    }
}

/// Context tables used by location/subscriber/provider-fallback awareness.
#[derive(Debug, Clone, Default)]
pub struct ContextConfig {
    pub subnets: Vec<SubnetRule>,
    pub dhcp_leases: HashMap<Ipv4Addr, String>,
    pub accounts: HashMap<Ipv4Addr, String>,
    pub provider_ips: HashMap<Ipv4Addr, String>,
}

/// Immutable snapshot of all deterministic classification rules.
#[derive(Debug, Clone, Default)]
pub struct SignatureDb {
    pub version: u64,
    pub port_map: HashMap<(Transport, u16), ServiceClass>,
    pub ext_map: HashMap<String, String>,
    pub host_patterns: Vec<HostRule>,
    pub ip_sets: Vec<IpSetRule>,
    pub ua_rules: Vec<UaRule>,
    pub mac_oui: HashMap<[u8; 3], (DeviceType, String)>,
    pub fixed_len_rules: Vec<FixedLenRule>,
    pub context: ContextConfig,
}

impl SignatureDb {
    pub fn load(path: &Path) -> Result<Self, DbError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, DbError> {
        let raw: RawDb = toml::from_str(text).map_err(|e| DbError::Syntax(e.to_string()))?;
        if raw.version == 0 {
            return Err(DbError::Validation("version must be > 0".into()));
        }
        let mut port_map = HashMap::new();
        for p in raw.ports {
            let transport = match p.transport.as_str() {
                "tcp" => Transport::Tcp,
                "udp" => Transport::Udp,
                other => {
                    return Err(DbError::Validation(format!("unknown transport {other:?}")))
                }
            };
            if port_map.insert((transport, p.port), p.service).is_some() {
                return Err(DbError::Validation(format!(
                    "duplicate port rule {}/{}",
                    p.transport, p.port
                )));
            }
        }
        let ext_map = raw
            .extensions
            .into_iter()
            .map(|e| (e.ext.to_ascii_lowercase(), e.application))
            .collect();
        let host_patterns = raw
            .hosts
            .into_iter()
            .map(|h| HostRule {
                suffix: h.suffix.to_ascii_lowercase(),
                application: h.application,
                provider: h.provider,
                actions: h.actions,
            })
            .collect();
        let ip_sets = raw
            .ip_sets
            .into_iter()
            .map(|s| IpSetRule {
                name: s.name,
                application: s.application,
                provider: s.provider,
                ips: s.ips.into_iter().collect(),
            })
            .collect();
        let mut ua_rules = Vec::new();
        for r in raw.ua_rules {
            let matcher = match (r.contains, r.regex) {
                (Some(c), None) => UaMatcher::Contains(c),
                (None, Some(re)) => {
                    // Anchor to bound matching cost on adversarial UAs.
                    let anchored = format!("^(?:{re})");
                    UaMatcher::Anchored(
                        Regex::new(&anchored)
                            .map_err(|e| DbError::Validation(format!("ua regex: {e}")))?,
                    )
                }
                _ => {
                    return Err(DbError::Validation(
                        "ua rule needs exactly one of `contains` or `regex`".into(),
                    ))
                }
            };
            ua_rules.push(UaRule {
                matcher,
                device_type: r.device_type,
                brand: r.brand,
                os: r.os,
            });
        }
        let mut mac_oui = HashMap::new();
        for o in raw.oui {
            let prefix = parse_oui(&o.prefix)?;
            mac_oui.insert(prefix, (o.device_type, o.brand));
        }
        let mut fixed_len_rules = Vec::new();
        for f in raw.fixed_len {
            let upstream = match f.direction.as_str() {
                "up" => true,
                "down" => false,
                other => {
                    return Err(DbError::Validation(format!(
                        "fixed_len direction must be up|down, got {other:?}"
                    )))
                }
            };
            if f.min_packets == 0 {
                return Err(DbError::Validation("fixed_len min_packets must be > 0".into()));
            }
            fixed_len_rules.push(FixedLenRule {
                upstream,
                length: f.length,
                min_packets: f.min_packets,
                application: f.application,
                provider: f.provider,
            });
        }
        let mut subnets = Vec::new();
        for s in raw.subnets {
            subnets.push(parse_subnet(&s)?);
        }
        let context = ContextConfig {
            subnets,
            dhcp_leases: raw.leases.into_iter().map(|l| (l.ip, l.segment)).collect(),
            accounts: raw
                .accounts
                .into_iter()
                .map(|a| (a.ip, a.subscriber_id))
                .collect(),
            provider_ips: raw
                .provider_ips
                .into_iter()
                .map(|p| (p.ip, p.provider))
                .collect(),
        };
        Ok(SignatureDb {
            version: raw.version,
            port_map,
            ext_map,
            host_patterns,
            ip_sets,
            ua_rules,
            mac_oui,
            fixed_len_rules,
            context,
        })
    }
}

fn parse_oui(s: &str) -> Result<[u8; 3], DbError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(DbError::Validation(format!("oui prefix {s:?} must be XX:XX:XX")));
    }
    let mut out = [0u8; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = u8::from_str_radix(p, 16)
            .map_err(|_| DbError::Validation(format!("oui prefix {s:?} not hex")))?;
    }
    Ok(out)
}

fn parse_subnet(raw: &RawSubnet) -> Result<SubnetRule, DbError> {
    let (addr, len) = raw
        .cidr
        .split_once('/')
        .ok_or_else(|| DbError::Validation(format!("subnet {:?} must be CIDR", raw.cidr)))?;
    let ip: Ipv4Addr = addr
        .parse()
        .map_err(|_| DbError::Validation(format!("bad subnet address {addr:?}")))?;
    let prefix_len: u8 = len
        .parse()
        .map_err(|_| DbError::Validation(format!("bad prefix length {len:?}")))?;
    if prefix_len > 32 {
        return Err(DbError::Validation(format!("prefix length {prefix_len} > 32")));
    }
    Ok(SubnetRule {
        network: u32::from(ip),
        prefix_len,
        tag: raw.tag.clone(),
        access_point: raw.access_point.clone(),
    })
}
