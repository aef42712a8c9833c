//! Packet ingestion: pcap file reading and Ethernet/IPv4/TCP/UDP decoding.
//!
//! Stands in for the kernel-hook collection plug-in. Frames that are not
//! IPv4-over-Ethernet are skipped and counted rather than surfaced, so
//! decoding is total over well-formed files.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read};
use std::net::Ipv4Addr;
use std::path::Path;

use thiserror::Error;

pub const PCAP_MAGIC: u32 = 0xa1b2_c3d4;
pub const LINKTYPE_ETHERNET: u32 = 1;

pub const TCP_FIN: u8 = 0x01;
pub const TCP_SYN: u8 = 0x02;
pub const TCP_RST: u8 = 0x04;
pub const TCP_ACK: u8 = 0x10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Transport {
    Tcp,
    Udp,
    Other,
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transport::Tcp => write!(f, "tcp"),
            Transport::Udp => write!(f, "udp"),
            Transport::Other => write!(f, "other"),
        }
    }
}

/// One decoded IPv4-over-Ethernet frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    /// Seconds since epoch, microsecond resolution.
    pub ts: f64,
    pub src_mac: [u8; 6],
    pub dst_mac: [u8; 6],
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    /// 0 for non-TCP/UDP.
    pub src_port: u16,
    pub dst_port: u16,
    pub transport: Transport,
    /// Original length on the wire.
    pub wire_len: u32,
    /// Transport payload bytes (truncated at snap length).
    pub payload: Vec<u8>,
    pub tcp_flags: Option<u8>,
}

impl Packet {
    pub fn has_flag(&self, flag: u8) -> bool {
        self.tcp_flags.map(|f| f & flag != 0).unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endianness {
    Big,
    Little,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    PcapFile,
    Synthetic,
}

/// Per-source skip accounting. `skipped_bytes` carries the wire bytes of all
/// skipped frames so downstream byte-conservation checks can close the books.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipCounters {
    pub non_ipv4: u64,
    pub ipv6: u64,
    pub fragments: u64,
    pub truncated: u64,
    pub ts_regressions: u64,
    pub skipped_bytes: u64,
}

impl SkipCounters {
    pub fn skipped_frames(&self) -> u64 {
        self.non_ipv4 + self.ipv6 + self.fragments + self.truncated
    }
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("capture file not found: {0}")]
    FileNotFound(String),
    #[error("bad pcap magic: 0x{0:08x}")]
    BadMagic(u32),
    #[error("unsupported link type: {0}")]
    UnsupportedLinkType(u32),
    #[error("truncated pcap global header")]
    TruncatedHeader,
    #[error("corrupt record header: {0}")]
    CorruptRecordHeader(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// An open capture source reading pcap-framed bytes.
///
/// The synthetic source replays trafficgen output through this same decode
/// path, so tests exercise identical code.
#[derive(Debug)]
pub struct CaptureSource<R: Read> {
    pub kind: SourceKind,
    pub link_type: u32,
    pub endianness: Endianness,
    pub snap_len: u32,
    pub skips: SkipCounters,
    pub returned: u64,
    reader: R,
    last_ts: Option<f64>,
}

pub type FileSource = CaptureSource<BufReader<File>>;

/// Opens a pcap file, detecting byte order from the magic number.
pub fn open_capture<P: AsRef<Path>>(path: P) -> Result<FileSource, CaptureError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CaptureError::FileNotFound(path.display().to_string())
        } else {
            CaptureError::Io(e)
        }
    })?;
    CaptureSource::from_reader(BufReader::new(file), SourceKind::PcapFile)
}

impl<R: Read> CaptureSource<R> {
    pub fn from_reader(mut reader: R, kind: SourceKind) -> Result<Self, CaptureError> {
        let mut hdr = [0u8; 24];
        read_exact_or(&mut reader, &mut hdr, CaptureError::TruncatedHeader)?;
        let raw_magic = u32::from_be_bytes([hdr[0], hdr[1], hdr[2], hdr[3]]);
        let endianness = if raw_magic == PCAP_MAGIC {
            Endianness::Big
        } else if raw_magic.swap_bytes() == PCAP_MAGIC {
            Endianness::Little
        } else {
            return Err(CaptureError::BadMagic(raw_magic));
        };
        let u32_at = |b: &[u8], off: usize| -> u32 {
            let w = [b[off], b[off + 1], b[off + 2], b[off + 3]];
            match endianness {
                Endianness::Big => u32::from_be_bytes(w),
                Endianness::Little => u32::from_le_bytes(w),
            }
        };
        let snap_len = u32_at(&hdr, 16);
        let link_type = u32_at(&hdr, 20);
        if link_type != LINKTYPE_ETHERNET {
            return Err(CaptureError::UnsupportedLinkType(link_type));
        }
        Ok(CaptureSource {
            kind,
            link_type,
            endianness,
            snap_len,
            skips: SkipCounters::default(),
            returned: 0,
            reader,
            last_ts: None,
        })
    }

    fn read_u32(&mut self, buf: &[u8], off: usize) -> u32 {
        let w = [buf[off], buf[off + 1], buf[off + 2], buf[off + 3]];
        match self.endianness {
            Endianness::Big => u32::from_be_bytes(w),
            Endianness::Little => u32::from_le_bytes(w),
        }
    }

    /// Returns the next decoded packet, or `None` at end of stream.
    ///
    /// Non-IPv4 and truncated frames are skipped with a counter. Timestamps
    /// that regress are clamped to the previous value plus 1 µs and counted.
    pub fn next_packet(&mut self) -> Result<Option<Packet>, CaptureError> {
        loop {
            let mut rec = [0u8; 16];
            match read_record_header(&mut self.reader, &mut rec)? {
                false => return Ok(None),
                true => {}
            }
            let ts_sec = self.read_u32(&rec, 0);
            let ts_usec = self.read_u32(&rec, 4);
            let incl_len = self.read_u32(&rec, 8);
            let orig_len = self.read_u32(&rec, 12);
            if ts_usec >= 1_000_000 {
                return Err(CaptureError::CorruptRecordHeader(format!(
                    "ts_usec {ts_usec} out of range"
                )));
            }
            if incl_len > self.snap_len.max(65535) || incl_len > orig_len {
                return Err(CaptureError::CorruptRecordHeader(format!(
                    "incl_len {incl_len} inconsistent (orig_len {orig_len}, snap {})",
                    self.snap_len
                )));
            }
            let mut frame = vec![0u8; incl_len as usize];
            read_exact_or(
                &mut self.reader,
                &mut frame,
                CaptureError::CorruptRecordHeader(format!(
                    "record body shorter than incl_len {incl_len}"
                )),
            )?;
            let mut ts = ts_sec as f64 + ts_usec as f64 * 1e-6;
            if let Some(prev) = self.last_ts {
                if ts < prev {
                    ts = prev + 1e-6;
                    self.skips.ts_regressions += 1;
                }
            }
            self.last_ts = Some(ts);
            match decode_ethernet_ipv4(&frame, ts, orig_len) {
                Ok(pkt) => {
                    self.returned += 1;
                    return Ok(Some(pkt));
                }
                Err(skip) => {
                    self.skips.skipped_bytes += orig_len as u64;
                    match skip {
                        SkipReason::NonIpv4 => self.skips.non_ipv4 += 1,
                        SkipReason::Ipv6 => self.skips.ipv6 += 1,
                        SkipReason::Fragment => self.skips.fragments += 1,
                        SkipReason::Truncated => self.skips.truncated += 1,
                    }
                }
            }
        }
    }
}

enum SkipReason {
    NonIpv4,
    Ipv6,
    Fragment,
    Truncated,
}

fn decode_ethernet_ipv4(frame: &[u8], ts: f64, orig_len: u32) -> Result<Packet, SkipReason> {
    if frame.len() < 14 {
        return Err(SkipReason::Truncated);
    }
    let dst_mac: [u8; 6] = frame[0..6].try_into().unwrap();
    let src_mac: [u8; 6] = frame[6..12].try_into().unwrap();
    let ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    match ethertype {
        0x0800 => {}
        0x86dd => return Err(SkipReason::Ipv6),
        _ => return Err(SkipReason::NonIpv4),
    }
    let ip = &frame[14..];
    if ip.len() < 20 {
        return Err(SkipReason::Truncated);
    }
    if ip[0] >> 4 != 4 {
        return Err(SkipReason::NonIpv4);
    }
    let ihl = ((ip[0] & 0x0f) as usize) * 4;
    if ihl < 20 || ip.len() < ihl {
        return Err(SkipReason::Truncated);
    }
    let total_len = u16::from_be_bytes([ip[2], ip[3]]) as usize;
    let frag_field = u16::from_be_bytes([ip[6], ip[7]]);
    let frag_offset = frag_field & 0x1fff;
    if frag_offset != 0 {
        // Non-first fragments carry no transport header; no reassembly here.
        return Err(SkipReason::Fragment);
    }
    let proto = ip[9];
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let ip_payload_end = total_len.min(ip.len());
    let transport_bytes = &ip[ihl..ip_payload_end.max(ihl)];
    let (transport, src_port, dst_port, tcp_flags, payload) = match proto {
        6 => {
            if transport_bytes.len() < 20 {
                return Err(SkipReason::Truncated);
            }
            let src_port = u16::from_be_bytes([transport_bytes[0], transport_bytes[1]]);
            let dst_port = u16::from_be_bytes([transport_bytes[2], transport_bytes[3]]);
            let data_off = ((transport_bytes[12] >> 4) as usize) * 4;
            if data_off < 20 || transport_bytes.len() < data_off {
                return Err(SkipReason::Truncated);
            }
            let flags = transport_bytes[13];
            (
                Transport::Tcp,
                src_port,
                dst_port,
                Some(flags),
                transport_bytes[data_off..].to_vec(),
            )
        }
        17 => {
            if transport_bytes.len() < 8 {
                return Err(SkipReason::Truncated);
            }
            let src_port = u16::from_be_bytes([transport_bytes[0], transport_bytes[1]]);
            let dst_port = u16::from_be_bytes([transport_bytes[2], transport_bytes[3]]);
            (
                Transport::Udp,
                src_port,
                dst_port,
                None,
                transport_bytes[8..].to_vec(),
            )
        }
        _ => (Transport::Other, 0, 0, None, Vec::new()),
    };
    Ok(Packet {
        ts,
        src_mac,
        dst_mac,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        transport,
        wire_len: orig_len,
        payload,
        tcp_flags,
    })
}

fn read_exact_or<R: Read>(
    reader: &mut R,
    buf: &mut [u8],
    err: CaptureError,
) -> Result<(), CaptureError> {
    match reader.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(err),
        Err(e) => Err(CaptureError::Io(e)),
    }
}

/// Reads a 16-byte record header; returns false on clean end of stream.
fn read_record_header<R: Read>(reader: &mut R, buf: &mut [u8; 16]) -> Result<bool, CaptureError> {
    let mut read = 0;
    while read < 16 {
        let n = reader.read(&mut buf[read..])?;
        if n == 0 {
            if read == 0 {
                return Ok(false);
            }
            return Err(CaptureError::CorruptRecordHeader(format!(
                "partial record header ({read} of 16 bytes)"
            )));
        }
        read += n;
    }
    Ok(true)
}
