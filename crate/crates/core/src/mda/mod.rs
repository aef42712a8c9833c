//! Multi-dimensional awareness: service, application, device, provider,
//! location, subscriber, plus the decision-tree path for encrypted
//! proprietary sessions.

pub mod db;
pub mod tree;

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::capture::Transport;
use crate::flow::{features, Session};

pub use db::{ContextConfig, DbError, SignatureDb};
pub use tree::{train as train_encrypted_model, DecisionTreeModel, TrainError, TrainParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ServiceClass {
    #[serde(rename = "HTTP")]
    Http,
    #[serde(rename = "P2P")]
    P2p,
    #[serde(rename = "DNS")]
    Dns,
    #[serde(rename = "PROPRIETARY_IOT")]
    ProprietaryIot,
    #[serde(rename = "OTHER")]
    Other,
}

impl ServiceClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ServiceClass::Http => "HTTP",
            ServiceClass::P2p => "P2P",
            ServiceClass::Dns => "DNS",
            ServiceClass::ProprietaryIot => "PROPRIETARY_IOT",
            ServiceClass::Other => "OTHER",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeviceType {
    Smartphone,
    Pad,
    Pc,
    TvBox,
    GameConsole,
    IotSensor,
    Unknown,
}

impl DeviceType {
    pub fn as_str(&self) -> &'static str {
        match self {
            DeviceType::Smartphone => "SMARTPHONE",
            DeviceType::Pad => "PAD",
            DeviceType::Pc => "PC",
            DeviceType::TvBox => "TV_BOX",
            DeviceType::GameConsole => "GAME_CONSOLE",
            DeviceType::IotSensor => "IOT_SENSOR",
            DeviceType::Unknown => "UNKNOWN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationInfo {
    pub subnet_tag: String,
    #[serde(default)]
    pub dhcp_segment: String,
    #[serde(default)]
    pub access_point: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubscriberDerivation {
    AccountMap,
    DhcpSegment,
    IpFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriberInfo {
    pub subscriber_id: String,
    pub derivation: SubscriberDerivation,
}

/// Per-dimension confidence; 1.0 marks a deterministic rule hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub service: f64,
    pub application: f64,
    pub device: f64,
    pub provider: f64,
    pub location: f64,
    pub subscriber: f64,
}

impl Default for Confidence {
    fn default() -> Self {
        Confidence {
            service: 0.0,
            application: 0.0,
            device: 0.0,
            provider: 0.0,
            location: 0.0,
            subscriber: 0.0,
        }
    }
}

/// The seven-dimension classification result for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwarenessLabels {
    pub service: ServiceClass,
    pub application: String,
    pub action: String,
    pub device_type: DeviceType,
    pub device_brand: String,
    pub device_os: String,
    pub provider: String,
    pub location: LocationInfo,
    pub subscriber: SubscriberInfo,
    pub confidence: Confidence,
}

impl AwarenessLabels {
    pub fn unknown_for(src_ip: Ipv4Addr) -> Self {
        AwarenessLabels {
            service: ServiceClass::Other,
            application: "unknown".into(),
            action: "unknown".into(),
            device_type: DeviceType::Unknown,
            device_brand: String::new(),
            device_os: String::new(),
            provider: String::new(),
            location: LocationInfo {
                subnet_tag: fallback_subnet_tag(src_ip),
                dhcp_segment: String::new(),
                access_point: String::new(),
            },
            subscriber: SubscriberInfo {
                subscriber_id: src_ip.to_string(),
                derivation: SubscriberDerivation::IpFallback,
            },
            confidence: Confidence::default(),
        }
    }

    /// Value of a named dimension, for grouping/aggregation.
    pub fn dimension_value(&self, dimension: &str) -> Option<String> {
        match dimension {
            "service" => Some(self.service.as_str().to_string()),
            "application" => Some(self.application.clone()),
            "device_type" => Some(self.device_type.as_str().to_string()),
            "device_brand" => Some(if self.device_brand.is_empty() {
                "unknown".to_string()
            } else {
                self.device_brand.clone()
            }),
            "provider" => Some(if self.provider.is_empty() {
                "unknown".to_string()
            } else {
                self.provider.clone()
            }),
            "location" => Some(self.location.subnet_tag.clone()),
            "subscriber" => Some(self.subscriber.subscriber_id.clone()),
            _ => None,
        }
    }
}

pub const DIMENSIONS: [&str; 7] = [
    "service",
    "application",
    "device_type",
    "device_brand",
    "provider",
    "location",
    "subscriber",
];

fn fallback_subnet_tag(ip: Ipv4Addr) -> String {
    let o = ip.octets();
    format!("subnet-{}.{}.{}.0/24", o[0], o[1], o[2])
}

/// The endpoint opposite to the initiator.
fn responder(s: &Session) -> (Ipv4Addr, u16) {
    if s.key.endpoint_a == s.initiator {
        s.key.endpoint_b
    } else {
        s.key.endpoint_a
    }
}

/// Coarse service label from the server-side port, overridden to HTTP when a
/// GET was actually parsed on the session.
pub fn classify_service(s: &Session, db: &SignatureDb) -> ServiceClass {
    if s.http_stream.info().is_some() {
        return ServiceClass::Http;
    }
    if s.key.transport == Transport::Other {
        return ServiceClass::Other;
    }
    let (_, port) = responder(s);
    db.port_map
        .get(&(s.key.transport, port))
        .copied()
        .unwrap_or(ServiceClass::Other)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApplicationMatch {
    pub application: Option<String>,
    pub provider: String,
    pub action: String,
}

fn url_extension(url: &str) -> Option<String> {
    let path = url.split(['?', '#']).next().unwrap_or(url);
    let file = path.rsplit('/').next().unwrap_or(path);
    let (stem, ext) = file.rsplit_once('.')?;
    if stem.is_empty() || ext.is_empty() {
        return None;
    }
    Some(ext.to_ascii_lowercase())
}

fn host_matches_suffix(host: &str, suffix: &str) -> bool {
    let host = host.to_ascii_lowercase();
    host == suffix || host.ends_with(&format!(".{suffix}")) || host.ends_with(suffix)
}

/// Application + provider from the rule precedence chain: host suffix, URL
/// extension, destination IP set, fixed-length pattern. First hit wins.
pub fn classify_application(s: &Session, db: &SignatureDb) -> ApplicationMatch {
    if let Some(http) = s.http_stream.info() {
        if !http.host.is_empty() {
            for rule in &db.host_patterns {
                if host_matches_suffix(&http.host, &rule.suffix) {
                    let action = rule
                        .actions
                        .iter()
                        .find(|a| http.url.contains(&a.keyword))
                        .map(|a| a.action.clone())
                        .unwrap_or_else(|| "unknown".to_string());
                    return ApplicationMatch {
                        application: Some(rule.application.clone()),
                        provider: rule.provider.clone(),
                        action,
                    };
                }
            }
        }
        if let Some(ext) = url_extension(&http.url) {
            if let Some(app) = db.ext_map.get(&ext) {
                return ApplicationMatch {
                    application: Some(app.clone()),
                    provider: String::new(),
                    action: "unknown".into(),
                };
            }
        }
    }
    let (dst_ip, _) = responder(s);
    for set in &db.ip_sets {
        if set.ips.contains(&dst_ip) {
            return ApplicationMatch {
                application: Some(set.application.clone()),
                provider: set.provider.clone(),
                action: "unknown".into(),
            };
        }
    }
    for rule in &db.fixed_len_rules {
        let (count, bytes, samples) = if rule.upstream {
            (s.pkt_count_up, s.byte_count_up, &s.pkt_len_samples_up)
        } else {
            (s.pkt_count_down, s.byte_count_down, &s.pkt_len_samples_down)
        };
        let all_fixed = count >= rule.min_packets
            && bytes == rule.length as u64 * count
            && samples.iter().all(|&l| l == rule.length);
        if all_fixed {
            return ApplicationMatch {
                application: Some(rule.application.clone()),
                provider: rule.provider.clone(),
                action: "unknown".into(),
            };
        }
    }
    ApplicationMatch::default()
}

/// Device identity from UA rules when a user agent was seen, else MAC OUI.
pub fn classify_device(s: &Session, db: &SignatureDb) -> (DeviceType, String, String) {
    if let Some(http) = s.http_stream.info() {
        if !http.user_agent.is_empty() {
            for rule in &db.ua_rules {
                if rule.matcher.matches(&http.user_agent) {
                    return (rule.device_type, rule.brand.clone(), rule.os.clone());
                }
            }
        }
    }
    let oui = [s.initiator_mac[0], s.initiator_mac[1], s.initiator_mac[2]];
    if let Some((device_type, brand)) = db.mac_oui.get(&oui) {
        return (*device_type, brand.clone(), String::new());
    }
    (DeviceType::Unknown, String::new(), String::new())
}

/// Location + subscriber from the context tables, plus the provider fallback
/// keyed on destination IP.
pub fn classify_context(
    s: &Session,
    cfg: &ContextConfig,
) -> (LocationInfo, SubscriberInfo, String, bool) {
    let (src_ip, _) = s.initiator;
    let mut best: Option<&db::SubnetRule> = None;
    for rule in &cfg.subnets {
        if rule.contains(src_ip) {
            let better = match best {
                None => true,
                Some(b) => rule.prefix_len > b.prefix_len,
            };
            if better {
                best = Some(rule);
            }
        }
    }
    let subnet_hit = best.is_some();
    let dhcp_segment = cfg.dhcp_leases.get(&src_ip).cloned().unwrap_or_default();
    let location = LocationInfo {
        subnet_tag: best
            .map(|r| r.tag.clone())
            .unwrap_or_else(|| fallback_subnet_tag(src_ip)),
        dhcp_segment: dhcp_segment.clone(),
        access_point: best.map(|r| r.access_point.clone()).unwrap_or_default(),
    };
    let subscriber = if let Some(id) = cfg.accounts.get(&src_ip) {
        SubscriberInfo {
            subscriber_id: id.clone(),
            derivation: SubscriberDerivation::AccountMap,
        }
    } else if !dhcp_segment.is_empty() {
        SubscriberInfo {
            subscriber_id: format!("{dhcp_segment}/{src_ip}"),
            derivation: SubscriberDerivation::DhcpSegment,
        }
    } else {
        SubscriberInfo {
            subscriber_id: src_ip.to_string(),
            derivation: SubscriberDerivation::IpFallback,
        }
    };
    let (dst_ip, _) = responder(s);
    let provider_fallback = cfg.provider_ips.get(&dst_ip).cloned().unwrap_or_default();
    (location, subscriber, provider_fallback, subnet_hit)
}

/// Runs every dimension in fixed order; never fails.
///
/// Deterministic rules carry confidence 1.0 and take precedence over the
/// decision tree, which is consulted only for PROPRIETARY_IOT/OTHER sessions
/// whose application is still unknown.
pub fn classify_all(
    s: &Session,
    db: &SignatureDb,
    model: Option<&DecisionTreeModel>,
) -> AwarenessLabels {
    let service = classify_service(s, db);
    let app = classify_application(s, db);
    let (device_type, device_brand, device_os) = classify_device(s, db);
    let (location, subscriber, provider_fallback, subnet_hit) =
        classify_context(s, &db.context);
    let mut labels = AwarenessLabels {
        service,
        application: "unknown".into(),
        action: app.action.clone(),
        device_type,
        device_brand,
        device_os,
        provider: String::new(),
        location,
        subscriber,
        confidence: Confidence::default(),
    };
    labels.confidence.service = if service != ServiceClass::Other || s.http_stream.info().is_some()
    {
        1.0
    } else {
        0.0
    };
    match app.application {
        Some(application) => {
            labels.application = application;
            labels.provider = app.provider;
            labels.confidence.application = 1.0;
        }
        None => {
            let tree_eligible =
                matches!(service, ServiceClass::ProprietaryIot | ServiceClass::Other);
            if tree_eligible {
                if let Some(model) = model {
                    let (label, confidence) = model.classify(&features(s));
                    labels.application = label.to_string();
                    labels.confidence.application = confidence;
                }
            }
        }
    }
    if labels.provider.is_empty() {
        labels.provider = provider_fallback;
    }
    labels.confidence.provider = if labels.provider.is_empty() { 0.0 } else { 1.0 };
    labels.confidence.device = if labels.device_type != DeviceType::Unknown {
        1.0
    } else {
        0.0
    };
    labels.confidence.location = if subnet_hit { 1.0 } else { 0.0 };
    labels.confidence.subscriber = match labels.subscriber.derivation {
        SubscriberDerivation::AccountMap | SubscriberDerivation::DhcpSegment => 1.0,
        SubscriberDerivation::IpFallback => 0.5,
    };
    labels
}
