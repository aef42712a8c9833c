//! Byte-level Ethernet/IPv4/TCP/UDP frame construction and pcap writing.
//!
//! Used by the synthetic traffic generator and by decode tests.

use std::net::Ipv4Addr;

pub struct FrameBuilder;

impl FrameBuilder {
    pub fn tcp(
        src_mac: [u8; 6],
        dst_mac: [u8; 6],
        src_ip: Ipv4Addr,
        dst_ip: Ipv4Addr,
        src_port: u16,
        dst_port: u16,
        flags: u8,
        payload: &[u8],
    ) -> Vec<u8> {
        let mut tcp = Vec::with_capacity(20 + payload.len());
        tcp.extend_from_slice(&src_port.to_be_bytes());
        tcp.extend_from_slice(&dst_port.to_be_bytes());
        tcp.extend_from_slice(&[0; 8]); // seq + ack
        tcp.push(5 << 4); // data offset 5 words
        tcp.push(flags);
        tcp.extend_from_slice(&[0xff, 0xff]); // window
        tcp.extend_from_slice(&[0, 0, 0, 0]); // checksum + urgent
        tcp.extend_from_slice(payload);
        Self::ipv4(src_mac, dst_mac, src_ip, dst_ip, 6, &tcp)
    }

    pub fn udp(
        src_mac: [u8; 6],
        dst_mac: [u8; 6],
        src_ip: Ipv4Addr,
        dst_ip: Ipv4Addr,
        src_port: u16,
        dst_port: u16,
        payload: &[u8],
    ) -> Vec<u8> {
        let mut udp = Vec::with_capacity(8 + payload.len());
        udp.extend_from_slice(&src_port.to_be_bytes());
        udp.extend_from_slice(&dst_port.to_be_bytes());
        udp.extend_from_slice(&((8 + payload.len()) as u16).to_be_bytes());
        udp.extend_from_slice(&[0, 0]); // checksum
        udp.extend_from_slice(payload);
        Self::ipv4(src_mac, dst_mac, src_ip, dst_ip, 17, &udp)
    }

    fn ipv4(
        src_mac: [u8; 6],
        dst_mac: [u8; 6],
        src_ip: Ipv4Addr,
        dst_ip: Ipv4Addr,
        proto: u8,
        ip_payload: &[u8],
    ) -> Vec<u8> {
        let total_len = (20 + ip_payload.len()) as u16;
        let mut frame = Vec::with_capacity(14 + total_len as usize);
        frame.extend_from_slice(&dst_mac);
        frame.extend_from_slice(&src_mac);
        frame.extend_from_slice(&0x0800u16.to_be_bytes());
        frame.push(0x45);
        frame.push(0);
        frame.extend_from_slice(&total_len.to_be_bytes());
        frame.extend_from_slice(&[0, 0, 0x40, 0]); // id, DF
        frame.push(64); // ttl
        frame.push(proto);
        frame.extend_from_slice(&[0, 0]); // header checksum, unchecked by decoder
        frame.extend_from_slice(&src_ip.octets());
        frame.extend_from_slice(&dst_ip.octets());
        frame.extend_from_slice(ip_payload);
        frame
    }
}

/// In-memory pcap serializer with selectable byte order.
pub struct PcapWriter {
    buf: Vec<u8>,
    little: bool,
}

impl PcapWriter {
    pub fn new_le() -> Self {
        Self::new(true)
    }

    pub fn new_be() -> Self {
        Self::new(false)
    }

    fn new(little: bool) -> Self {
        let mut buf = Vec::new();
        let magic = super::capture::PCAP_MAGIC;
        let push = |buf: &mut Vec<u8>, v: u32, little: bool| {
            if little {
                buf.extend_from_slice(&v.to_le_bytes());
            } else {
                buf.extend_from_slice(&v.to_be_bytes());
            }
        };
        push(&mut buf, magic, little);
        if little {
            buf.extend_from_slice(&2u16.to_le_bytes());
            buf.extend_from_slice(&4u16.to_le_bytes());
        } else {
            buf.extend_from_slice(&2u16.to_be_bytes());
            buf.extend_from_slice(&4u16.to_be_bytes());
        }
        push(&mut buf, 0, little); // thiszone
        push(&mut buf, 0, little); // sigfigs
        push(&mut buf, 65535, little); // snaplen
        push(&mut buf, super::capture::LINKTYPE_ETHERNET, little);
        PcapWriter { buf, little }
    }

    fn push_u32(&mut self, v: u32) {
        if self.little {
            self.buf.extend_from_slice(&v.to_le_bytes());
        } else {
            self.buf.extend_from_slice(&v.to_be_bytes());
        }
    }

    /// Appends one record; ts in seconds, microsecond precision.
    pub fn write_frame(&mut self, ts: f64, frame: &[u8]) {
        let ts_us = (ts * 1e6).round() as u64;
        self.push_u32((ts_us / 1_000_000) as u32);
        self.push_u32((ts_us % 1_000_000) as u32);
        self.push_u32(frame.len() as u32);
        self.push_u32(frame.len() as u32);
        self.buf.extend_from_slice(frame);
    }

    pub fn take(self) -> Vec<u8> {
        self.buf
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}
