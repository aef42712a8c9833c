//! Python bindings for the gateway awareness pipeline.
//!
//! Exposes corpus generation, pcap analysis, record codec round trips, and
//! the signature/policy parsers. Heavyweight results cross the boundary as
//! JSON strings so Python callers can `json.loads` them without bespoke
//! conversion glue.

use std::io::Cursor;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use shgw::capture::{CaptureSource, SourceKind};
use shgw::http::{self, ParseOutcome};
use shgw::mda;
use shgw::pipeline::{self, Pipeline, PipelineConfig};
use shgw::policy::{self, PolicyDocument};
use shgw::reporter::ReporterConfig;
use shgw::shdr;
use shgw::trafficgen::{self, CorpusSpec, DEFAULT_SIGNATURES};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Compiled signature database used for rule-based classification.
#[pyclass(name = "SignatureDb")]
struct PySignatureDb {
    inner: mda::SignatureDb,
}

#[pymethods]
impl PySignatureDb {
    /// Parse a TOML signature document; omit `text` for the built-in rules.
    #[new]
    #[pyo3(signature = (text=None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner =
            mda::SignatureDb::parse(text.unwrap_or(DEFAULT_SIGNATURES)).map_err(value_err)?;
        Ok(PySignatureDb { inner })
    }

    #[getter]
    fn version(&self) -> u64 {
        self.inner.version
    }

    fn __repr__(&self) -> String {
        format!("SignatureDb(version={})", self.inner.version)
    }
}

/// Cleansing and reporting policy document.
#[pyclass(name = "Policy")]
struct PyPolicy {
    inner: PolicyDocument,
}

#[pymethods]
impl PyPolicy {
    /// Parse a JSON policy document; omit `data` for the defaults.
    #[new]
    #[pyo3(signature = (data=None))]
    fn new(data: Option<&[u8]>) -> PyResult<Self> {
        let inner = match data {
            Some(bytes) => policy::parse_policy(bytes).map_err(value_err)?,
            None => PolicyDocument::default(),
        };
        Ok(PyPolicy { inner })
    }

    #[getter]
    fn version(&self) -> u64 {
        self.inner.version
    }

    fn to_json(&self) -> String {
        String::from_utf8(policy::encode_policy(&self.inner)).expect("utf8 policy")
    }

    fn __repr__(&self) -> String {
        format!("Policy(version={})", self.inner.version)
    }
}

/// Synthetic capture plus its labeled truth sidecar.
#[pyclass(name = "Corpus")]
struct PyCorpus {
    inner: trafficgen::Corpus,
}

#[pymethods]
impl PyCorpus {
    #[getter]
    fn pcap<'py>(&self, py: Python<'py>) -> Bound<'py, pyo3::types::PyBytes> {
        pyo3::types::PyBytes::new(py, &self.inner.pcap)
    }

    /// JSON-lines truth sidecar, one record per session.
    #[getter]
    fn truth(&self) -> &str {
        &self.inner.truth
    }

    #[getter]
    fn sessions(&self) -> usize {
        self.inner.sessions
    }

    #[getter]
    fn get_count(&self) -> u64 {
        self.inner.get_count
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(sessions={}, get_count={}, pcap_bytes={})",
            self.inner.sessions,
            self.inner.get_count,
            self.inner.pcap.len()
        )
    }
}

/// The built-in signature rules as a TOML string.
#[pyfunction]
fn default_signatures() -> &'static str {
    DEFAULT_SIGNATURES
}

/// Generate the labeled mixed-device corpus.
#[pyfunction]
#[pyo3(signature = (sessions=400, seed=7))]
fn generate_corpus(sessions: usize, seed: u64) -> PyCorpus {
    let spec = CorpusSpec {
        sessions,
        seed,
        ..CorpusSpec::default()
    };
    PyCorpus {
        inner: trafficgen::generate_corpus(&spec),
    }
}

/// Generate the web-browsing corpus (70% blocklisted extensions).
#[pyfunction]
#[pyo3(signature = (sessions=100, seed=7))]
fn generate_web_corpus(sessions: usize, seed: u64) -> PyCorpus {
    PyCorpus {
        inner: trafficgen::generate_web_corpus(sessions, seed),
    }
}

/// Generate high-rate GET load traffic.
#[pyfunction]
#[pyo3(signature = (rate=10_000, duration=1.0, seed=1))]
fn generate_load(rate: u64, duration: f64, seed: u64) -> PyCorpus {
    PyCorpus {
        inner: trafficgen::generate_load(rate, duration, seed),
    }
}

/// Parse an HTTP GET request head from a payload prefix.
///
/// Returns a dict of head fields when complete, `None` when more bytes are
/// needed, and raises `ValueError` for non-GET traffic.
#[pyfunction]
#[pyo3(signature = (data, max_scan=8192))]
fn parse_get<'py>(
    py: Python<'py>,
    data: &[u8],
    max_scan: usize,
) -> PyResult<Option<Bound<'py, pyo3::types::PyDict>>> {
    match http::parse_get(data, max_scan) {
        ParseOutcome::Got(info) => {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("url", info.url)?;
            d.set_item("host", info.host)?;
            d.set_item("user_agent", info.user_agent)?;
            d.set_item("referer", info.referer)?;
            d.set_item("complete", info.complete)?;
            Ok(Some(d))
        }
        ParseOutcome::NeedMoreData => Ok(None),
        ParseOutcome::NotHttp => Err(PyValueError::new_err("not an HTTP GET head")),
    }
}

/// Decode one record line and re-encode it canonically.
///
/// Raises `ValueError` for malformed lines; unknown fields are tolerated and
/// dropped, matching gateway behavior.
#[pyfunction]
fn canonical_record(line: &str) -> PyResult<String> {
    let mut stats = shdr::DecodeStats::default();
    let record = shdr::decode(line, &mut stats).map_err(value_err)?;
    Ok(shdr::encode(&record))
}

fn read_record_lines(dir: &std::path::Path) -> PyResult<Vec<String>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(value_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "log").unwrap_or(false))
        .collect();
    let epoch_of = |p: &PathBuf| -> u64 {
        p.file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.rsplit('-').next())
            .and_then(|s| s.parse().ok())
            .unwrap_or(0)
    };
    paths.sort_by_key(epoch_of);
    let mut lines = Vec::new();
    for path in paths {
        let body = std::fs::read_to_string(&path).map_err(value_err)?;
        let (_, records, _) = shdr::decode_batch(&body).map_err(value_err)?;
        lines.extend(records.iter().map(shdr::encode));
    }
    Ok(lines)
}

/// Run the full pipeline over pcap bytes.
///
/// Returns `(report_json, record_lines)`: the run report and every record
/// that survived cleansing, in batch order. Pass `truth` (JSON lines) to get
/// an `"accuracy"` section inside the report.
#[pyfunction]
#[pyo3(signature = (pcap, db=None, policy=None, truth=None, gateway_id="gw-0"))]
fn analyze(
    pcap: &[u8],
    db: Option<&PySignatureDb>,
    policy: Option<&PyPolicy>,
    truth: Option<&str>,
    gateway_id: &str,
) -> PyResult<(String, Vec<String>)> {
    let db = match db {
        Some(d) => d.inner.clone(),
        None => mda::SignatureDb::parse(DEFAULT_SIGNATURES).map_err(value_err)?,
    };
    let policy = policy.map(|p| p.inner.clone()).unwrap_or_default();
    let dir = tempfile::tempdir().map_err(value_err)?;
    let cfg = PipelineConfig {
        gateway_id: gateway_id.to_string(),
        collect_labels: truth.is_some(),
        ..PipelineConfig::default()
    };
    let mut p = Pipeline::new(
        cfg,
        db,
        None,
        policy,
        ReporterConfig::offline(dir.path().to_path_buf(), gateway_id),
    );
    let mut src =
        CaptureSource::from_reader(Cursor::new(pcap.to_vec()), SourceKind::Synthetic)
            .map_err(value_err)?;
    let report = p.run(&mut src).map_err(value_err)?;
    let mut report_value = serde_json::to_value(&report).expect("report json");
    if let Some(truth_text) = truth {
        let truth_records: Vec<trafficgen::TruthRecord> = truth_text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(value_err))
            .collect::<PyResult<_>>()?;
        let acc = pipeline::evaluate_accuracy(&p.session_labels, &truth_records);
        report_value["accuracy"] = serde_json::to_value(&acc).expect("accuracy json");
    }
    let lines = read_record_lines(dir.path())?;
    Ok((report_value.to_string(), lines))
}

#[pymodule]
fn shgw_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySignatureDb>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyCorpus>()?;
    m.add_function(wrap_pyfunction!(default_signatures, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(generate_web_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(generate_load, m)?)?;
    m.add_function(wrap_pyfunction!(parse_get, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_record, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    Ok(())
}
