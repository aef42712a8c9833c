//! Smart home gateway traffic awareness: pcap decode, flow sessions, HTTP
//! GET extraction, multi-dimensional classification, QoS windows, SHDR
//! records, policy cleansing, and reporting to a bundled mock collector.

pub mod capture;
pub mod collector;
pub mod flow;
pub mod framebuf;
pub mod http;
pub mod mda;
pub mod pipeline;
pub mod policy;
pub mod qos;
pub mod reporter;
pub mod shdr;
pub mod trafficgen;

pub use capture::{open_capture, CaptureSource, Packet, SourceKind, Transport};
pub use flow::{features, FlowConfig, FlowKey, FlowTable, Session, SessionFeatures};
pub use http::{parse_get, HttpGetInfo, HttpStream, ParseOutcome};
pub use mda::{classify_all, AwarenessLabels, DecisionTreeModel, SignatureDb};
pub use pipeline::{evaluate_accuracy, Pipeline, PipelineConfig, RunReport};
pub use policy::{parse_policy, PolicyDocument, PolicyStore};
pub use qos::{QosAccumulator, QosSnapshot};
pub use reporter::{ReportQueue, ReporterConfig};
pub use shdr::{decode as decode_shdr, encode as encode_shdr, ShdrRecord};
