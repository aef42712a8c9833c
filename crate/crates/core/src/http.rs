//! HTTP GET request-head extraction from TCP session payloads.
//!
//! Only GET heads are parsed; POST bodies carry user-generated content and
//! are deliberately left alone. Parsing is a pure function over the in-order
//! initiator payload prefix, so splitting across packets cannot change the
//! result.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpGetInfo {
    pub url: String,
    #[serde(default)]
    pub host: String,
    #[serde(default)]
    pub user_agent: String,
    #[serde(default)]
    pub referer: String,
    #[serde(default)]
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseOutcome {
    Got(HttpGetInfo),
    NeedMoreData,
    NotHttp,
}

/// Parses an HTTP GET head from the payload prefix, scanning at most
/// `max_scan` bytes.
pub fn parse_get(prefix: &[u8], max_scan: usize) -> ParseOutcome {
    let data = &prefix[..prefix.len().min(max_scan)];
    if data.len() < 4 {
        return if b"GET ".starts_with(data) && !data.is_empty() {
            ParseOutcome::NeedMoreData
        } else if data.is_empty() {
            ParseOutcome::NeedMoreData
        } else {
            ParseOutcome::NotHttp
        };
    }
    if &data[..4] != b"GET " {
        return ParseOutcome::NotHttp;
    }
    let head_end = match find_head_end(data) {
        Some(end) => end,
        None => {
            // Terminator not in budget: a head larger than max_scan is NotHttp.
            if prefix.len() >= max_scan {
                return ParseOutcome::NotHttp;
            }
            return ParseOutcome::NeedMoreData;
        }
    };
    let head = String::from_utf8_lossy(&data[..head_end]);
    let mut lines = head.split('\n').map(|l| l.trim_end_matches('\r'));
    let request_line = lines.next().unwrap_or("");
    let mut parts = request_line.splitn(3, ' ');
    let _method = parts.next();
    let target = match parts.next() {
        Some(t) if !t.is_empty() => t,
        _ => return ParseOutcome::NotHttp,
    };
    let mut info = HttpGetInfo {
        url: String::new(),
        host: String::new(),
        user_agent: String::new(),
        referer: String::new(),
        complete: true,
    };
    // Absolute-form targets split into host + path; a Host header still wins.
    if let Some(rest) = target.strip_prefix("http://") {
        match rest.find('/') {
            Some(slash) => {
                info.host = rest[..slash].to_string();
                info.url = rest[slash..].to_string();
            }
            None => {
                info.host = rest.to_string();
                info.url = "/".to_string();
            }
        }
    } else {
        info.url = target.to_string();
    }
    for line in lines {
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let value = sanitize(value.trim());
            match name.trim().to_ascii_lowercase().as_str() {
                "host" => info.host = value,
                "user-agent" => info.user_agent = value,
                "referer" => info.referer = value,
                _ => {}
            }
        }
    }
    info.url = sanitize(&info.url);
    info.host = sanitize(&info.host);
    if info.url.is_empty() {
        return ParseOutcome::NotHttp;
    }
    ParseOutcome::Got(info)
}

fn sanitize(s: &str) -> String {
    s.replace(['\r', '\n'], "")
}

/// Byte offset just past the blank-line terminator, CRLF or bare LF.
fn find_head_end(data: &[u8]) -> Option<usize> {
    let mut i = 0;
    while i < data.len() {
        if data[i] == b'\n' {
            let mut j = i + 1;
            if j < data.len() && data[j] == b'\r' {
                j += 1;
            }
            if j < data.len() && data[j] == b'\n' {
                return Some(j + 1);
            }
        }
        i += 1;
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
enum StreamState {
    Scanning,
    Done(HttpGetInfo),
    NotHttp,
}

/// Incremental per-session GET extraction: buffers the initiator payload
/// prefix up to `max_scan` and re-parses as data arrives. Only the first GET
/// is extracted; the buffer is dropped once a verdict is reached.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpStream {
    max_scan: usize,
    buf: Vec<u8>,
    state: StreamState,
}

impl HttpStream {
    pub fn new(max_scan: usize) -> Self {
        HttpStream {
            max_scan,
            buf: Vec::new(),
            state: StreamState::Scanning,
        }
    }

    pub fn push(&mut self, payload: &[u8]) {
        if self.state != StreamState::Scanning {
            return;
        }
        let room = self.max_scan.saturating_sub(self.buf.len());
        self.buf.extend_from_slice(&payload[..payload.len().min(room)]);
        match parse_get(&self.buf, self.max_scan) {
            ParseOutcome::Got(info) => {
                self.state = StreamState::Done(info);
                self.buf = Vec::new();
            }
            ParseOutcome::NotHttp => {
                self.state = StreamState::NotHttp;
                self.buf = Vec::new();
            }
            ParseOutcome::NeedMoreData => {
                if self.buf.len() >= self.max_scan {
                    // HeaderTooLarge: budget exhausted without a terminator.
                    self.state = StreamState::NotHttp;
                    self.buf = Vec::new();
                }
            }
        }
    }

    pub fn info(&self) -> Option<&HttpGetInfo> {
        match &self.state {
            StreamState::Done(info) => Some(info),
            _ => None,
        }
    }

    pub fn buffered_bytes(&self) -> usize {
        self.buf.capacity()
    }
}
