//! Classic pcap reading/writing and capture segmentation.
//!
//! Only the classic container (magic 0xA1B2C3D4, version 2.4, link type
//! Ethernet) is handled; IPv6 and pcapng are out of scope. Frames carry
//! synthetic locally-administered MAC addresses derived from the IPv4
//! addresses so no layer-2 field ever carries information.

use std::io::{Cursor, Write};
use std::net::Ipv4Addr;

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PCAP_MAGIC: u32 = 0xA1B2_C3D4;
pub const PCAP_MAGIC_SWAPPED: u32 = 0xD4C3_B2A1;
pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;

pub const TCP_FIN: u8 = 0x01;
pub const TCP_SYN: u8 = 0x02;
pub const TCP_RST: u8 = 0x04;
pub const TCP_PSH: u8 = 0x08;
pub const TCP_ACK: u8 = 0x10;
pub const TCP_URG: u8 = 0x20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Proto {
    Tcp,
    Udp,
    Icmp,
}

impl Proto {
    pub fn ip_number(self) -> u8 {
        match self {
            Proto::Icmp => 1,
            Proto::Tcp => 6,
            Proto::Udp => 17,
        }
    }

    pub fn from_ip_number(n: u8) -> Option<Proto> {
        match n {
            1 => Some(Proto::Icmp),
            6 => Some(Proto::Tcp),
            17 => Some(Proto::Udp),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
            Proto::Icmp => "icmp",
        }
    }
}

/// TCP options we track: MSS (kind 2) and window scale (kind 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TcpOption {
    Mss(u16),
    WindowScale(u8),
}

/// One captured frame, already reduced to the header fields the pipeline uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    /// 0 for ICMP.
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: Proto,
    /// FIN=0x01 SYN=0x02 RST=0x04 PSH=0x08 ACK=0x10 URG=0x20; 0 unless TCP.
    pub tcp_flags: u8,
    /// Echo request = 8, echo reply = 0; meaningful only for ICMP.
    pub icmp_type: u8,
    pub ttl: u8,
    pub wire_len: u32,
    pub payload_len: u32,
    /// TCP sequence number; 0 otherwise.
    pub seq: u32,
    pub window: u16,
    pub tcp_options: Vec<TcpOption>,
}

impl PacketRecord {
    /// Timestamp in whole microseconds since the epoch.
    pub fn ts_us(&self) -> i64 {
        self.ts_sec as i64 * 1_000_000 + self.ts_usec as i64
    }

    pub fn ts_seconds(&self) -> f64 {
        self.ts_sec as f64 + self.ts_usec as f64 * 1e-6
    }

    fn tcp_options_len(&self) -> usize {
        let raw: usize = self
            .tcp_options
            .iter()
            .map(|o| match o {
                TcpOption::Mss(_) => 4,
                TcpOption::WindowScale(_) => 3,
            })
            .sum();
        raw.div_ceil(4) * 4
    }

    fn transport_header_len(&self) -> usize {
        match self.proto {
            Proto::Tcp => 20 + self.tcp_options_len(),
            Proto::Udp => 8,
            Proto::Icmp => 8,
        }
    }

    /// Minimum frame size needed to carry this packet on the wire
    /// (Ethernet + IPv4 + transport header + payload). `wire_len` should be
    /// at least this; the generator sets it to exactly this value.
    pub fn computed_wire_len(&self) -> u32 {
        (14 + 20 + self.transport_header_len() + self.payload_len as usize) as u32
    }
}

/// A contiguous slice of a capture, at most `n` packets each.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureSegment {
    pub packets: Vec<PacketRecord>,
    pub index: usize,
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("bad pcap magic 0x{0:08X}")]
    BadMagic(u32),
    #[error("truncated pcap: needed {needed} more bytes, {available} remain")]
    Truncated { needed: usize, available: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Endianness {
    #[default]
    Little,
    Big,
}

/// Parse result; skipped counts frames that were not IPv4 TCP/UDP/ICMP.
#[derive(Debug, Default)]
pub struct PcapContents {
    pub packets: Vec<PacketRecord>,
    pub skipped: u64,
}

fn mac_for_ip(ip: Ipv4Addr) -> [u8; 6] {
    let o = ip.octets();
    // locally administered unicast prefix
    [0x02, 0x50, o[0], o[1], o[2], o[3]]
}

fn build_frame(p: &PacketRecord) -> Vec<u8> {
    let transport_len = p.transport_header_len();
    let ip_total = 20 + transport_len + p.payload_len as usize;
    let frame_len = (14 + ip_total).max(p.wire_len as usize);
    let mut f = Vec::with_capacity(frame_len);
    f.extend_from_slice(&mac_for_ip(p.dst_ip));
    f.extend_from_slice(&mac_for_ip(p.src_ip));
    f.extend_from_slice(&[0x08, 0x00]);
    // IPv4 header, no options
    f.push(0x45);
    f.push(0);
    f.extend_from_slice(&(ip_total as u16).to_be_bytes());
    f.extend_from_slice(&[0, 0, 0, 0]); // id, flags/frag
    f.push(p.ttl);
    f.push(p.proto.ip_number());
    f.extend_from_slice(&[0, 0]); // checksum left zero
    f.extend_from_slice(&p.src_ip.octets());
    f.extend_from_slice(&p.dst_ip.octets());
    match p.proto {
        Proto::Tcp => {
            f.extend_from_slice(&p.src_port.to_be_bytes());
            f.extend_from_slice(&p.dst_port.to_be_bytes());
            f.extend_from_slice(&p.seq.to_be_bytes());
            f.extend_from_slice(&[0, 0, 0, 0]); // ack
            let data_offset = (20 + p.tcp_options_len()) / 4;
            f.push((data_offset as u8) << 4);
            f.push(p.tcp_flags);
            f.extend_from_slice(&p.window.to_be_bytes());
            f.extend_from_slice(&[0, 0, 0, 0]); // checksum + urgent
            let mut opts = Vec::new();
            for o in &p.tcp_options {
                match o {
                    TcpOption::Mss(v) => {
                        opts.push(2);
                        opts.push(4);
                        opts.extend_from_slice(&v.to_be_bytes());
                    }
                    TcpOption::WindowScale(v) => {
                        opts.push(3);
                        opts.push(3);
                        opts.push(*v);
                    }
                }
            }
            while opts.len() % 4 != 0 {
                opts.push(1); // NOP pad
            }
            f.extend_from_slice(&opts);
        }
        Proto::Udp => {
            f.extend_from_slice(&p.src_port.to_be_bytes());
            f.extend_from_slice(&p.dst_port.to_be_bytes());
            f.extend_from_slice(&((8 + p.payload_len) as u16).to_be_bytes());
            f.extend_from_slice(&[0, 0]);
        }
        Proto::Icmp => {
            f.push(p.icmp_type);
            f.push(0);
            f.extend_from_slice(&[0, 0]); // checksum
            f.extend_from_slice(&[0, 0, 0, 0]); // id/seq
        }
    }
    f.resize(f.len() + p.payload_len as usize, 0);
    // Ethernet minimum / caller-requested padding
    if f.len() < frame_len {
        f.resize(frame_len, 0);
    }
    f
}

/// Serialize packets to classic pcap bytes (little-endian headers).
pub fn write_pcap(packets: &[PacketRecord]) -> Vec<u8> {
    write_pcap_with_endianness(packets, Endianness::Little)
}

pub fn write_pcap_with_endianness(packets: &[PacketRecord], endian: Endianness) -> Vec<u8> {
    let mut out = Vec::with_capacity(GLOBAL_HEADER_LEN + packets.len() * 80);
    match endian {
        Endianness::Little => write_headers::<LittleEndian>(&mut out, packets),
        Endianness::Big => write_headers::<BigEndian>(&mut out, packets),
    }
    out
}

fn write_headers<E: ByteOrder>(out: &mut Vec<u8>, packets: &[PacketRecord]) {
    out.write_u32::<E>(PCAP_MAGIC).unwrap();
    out.write_u16::<E>(2).unwrap();
    out.write_u16::<E>(4).unwrap();
    out.write_i32::<E>(0).unwrap(); // thiszone
    out.write_u32::<E>(0).unwrap(); // sigfigs
    out.write_u32::<E>(65535).unwrap(); // snaplen
    out.write_u32::<E>(1).unwrap(); // LINKTYPE_ETHERNET
    for p in packets {
        let frame = build_frame(p);
        out.write_u32::<E>(p.ts_sec).unwrap();
        out.write_u32::<E>(p.ts_usec).unwrap();
        out.write_u32::<E>(frame.len() as u32).unwrap();
        out.write_u32::<E>(frame.len() as u32).unwrap();
        out.write_all(&frame).unwrap();
    }
}

/// Parse classic pcap bytes. Non-IPv4 frames and transports other than
/// TCP/UDP/ICMP are counted in `skipped`, never an error.
pub fn read_pcap(bytes: &[u8]) -> Result<PcapContents, CaptureError> {
    if bytes.len() < GLOBAL_HEADER_LEN {
        return Err(CaptureError::Truncated {
            needed: GLOBAL_HEADER_LEN - bytes.len(),
            available: bytes.len(),
        });
    }
    let magic_le = LittleEndian::read_u32(&bytes[0..4]);
    let little = match magic_le {
        PCAP_MAGIC => true,
        PCAP_MAGIC_SWAPPED => false,
        other => return Err(CaptureError::BadMagic(other)),
    };
    if little {
        read_records::<LittleEndian>(&bytes[GLOBAL_HEADER_LEN..])
    } else {
        read_records::<BigEndian>(&bytes[GLOBAL_HEADER_LEN..])
    }
}

fn read_records<E: ByteOrder>(mut body: &[u8]) -> Result<PcapContents, CaptureError> {
    let mut contents = PcapContents::default();
    while !body.is_empty() {
        if body.len() < RECORD_HEADER_LEN {
            return Err(CaptureError::Truncated {
                needed: RECORD_HEADER_LEN - body.len(),
                available: body.len(),
            });
        }
        let mut cur = Cursor::new(body);
        let ts_sec = cur.read_u32::<E>()?;
        let ts_usec = cur.read_u32::<E>()?;
        let incl_len = cur.read_u32::<E>()? as usize;
        let orig_len = cur.read_u32::<E>()?;
        body = &body[RECORD_HEADER_LEN..];
        if body.len() < incl_len {
            return Err(CaptureError::Truncated {
                needed: incl_len - body.len(),
                available: body.len(),
            });
        }
        let frame = &body[..incl_len];
        body = &body[incl_len..];
        match parse_frame(frame, ts_sec, ts_usec, orig_len) {
            Some(p) => contents.packets.push(p),
            None => contents.skipped += 1,
        }
    }
    Ok(contents)
}

fn parse_frame(frame: &[u8], ts_sec: u32, ts_usec: u32, orig_len: u32) -> Option<PacketRecord> {
    if frame.len() < 14 + 20 {
        return None;
    }
    let ethertype = BigEndian::read_u16(&frame[12..14]);
    if ethertype != 0x0800 {
        return None;
    }
    let ip = &frame[14..];
    if ip[0] >> 4 != 4 {
        return None;
    }
    let ihl = (ip[0] & 0x0F) as usize * 4;
    if ihl < 20 || ip.len() < ihl {
        return None;
    }
    let ip_total = BigEndian::read_u16(&ip[2..4]) as usize;
    if ip_total < ihl || ip.len() < ip_total {
        return None;
    }
    let ttl = ip[8];
    let proto = Proto::from_ip_number(ip[9])?;
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let transport = &ip[ihl..ip_total];
    let mut p = PacketRecord {
        ts_sec,
        ts_usec,
        src_ip,
        dst_ip,
        src_port: 0,
        dst_port: 0,
        proto,
        tcp_flags: 0,
        icmp_type: 0,
        ttl,
        wire_len: orig_len,
        payload_len: 0,
        seq: 0,
        window: 0,
        tcp_options: Vec::new(),
    };
    match proto {
        Proto::Tcp => {
            if transport.len() < 20 {
                return None;
            }
            p.src_port = BigEndian::read_u16(&transport[0..2]);
            p.dst_port = BigEndian::read_u16(&transport[2..4]);
            p.seq = BigEndian::read_u32(&transport[4..8]);
            let data_offset = (transport[12] >> 4) as usize * 4;
            if data_offset < 20 || transport.len() < data_offset {
                return None;
            }
            p.tcp_flags = transport[13];
            p.window = BigEndian::read_u16(&transport[14..16]);
            p.payload_len = (transport.len() - data_offset) as u32;
            let mut opts = &transport[20..data_offset];
            while !opts.is_empty() {
                match opts[0] {
                    0 => break,
                    1 => opts = &opts[1..],
                    kind => {
                        if opts.len() < 2 {
                            break;
                        }
                        let len = opts[1] as usize;
                        if len < 2 || opts.len() < len {
                            break;
                        }
                        if kind == 2 && len == 4 {
                            p.tcp_options
                                .push(TcpOption::Mss(BigEndian::read_u16(&opts[2..4])));
                        } else if kind == 3 && len == 3 {
                            p.tcp_options.push(TcpOption::WindowScale(opts[2]));
                        }
                        opts = &opts[len..];
                    }
                }
            }
        }
        Proto::Udp => {
            if transport.len() < 8 {
                return None;
            }
            p.src_port = BigEndian::read_u16(&transport[0..2]);
            p.dst_port = BigEndian::read_u16(&transport[2..4]);
            let udp_len = BigEndian::read_u16(&transport[4..6]) as usize;
            p.payload_len = udp_len.saturating_sub(8).min(transport.len() - 8) as u32;
        }
        Proto::Icmp => {
            if transport.len() < 8 {
                return None;
            }
            p.icmp_type = transport[0];
            p.payload_len = (transport.len() - 8) as u32;
        }
    }
    Some(p)
}

/// Split a capture into segments of at most `n` packets; concatenation of
/// the segments restores the input.
pub fn segment(packets: &[PacketRecord], n: usize) -> Vec<CaptureSegment> {
    assert!(n >= 1, "segment size must be at least 1");
    packets
        .chunks(n)
        .enumerate()
        .map(|(index, chunk)| CaptureSegment {
            packets: chunk.to_vec(),
            index,
        })
        .collect()
}
