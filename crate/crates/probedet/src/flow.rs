//! Bidirectional flow assembly and per-flow feature extraction.
//!
//! Packets sharing a 5-tuple are grouped into bidirectional flows; the
//! initiator ("a2b") is whoever sent the flow's first packet. A flow closes
//! on RST, on FIN in both directions, or when the idle gap exceeds the
//! protocol's timeout; a later packet on the same 5-tuple opens a new flow.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::capture::{PacketRecord, Proto, TcpOption, TCP_ACK, TCP_FIN, TCP_RST, TCP_SYN};
use crate::dataset::MissingReason;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub initiator_ip: Ipv4Addr,
    pub responder_ip: Ipv4Addr,
    pub initiator_port: u16,
    pub responder_port: u16,
    pub proto: Proto,
}

/// Flow disposition, argus-style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowState {
    Con,
    Req,
    Rst,
    Fin,
    Int,
}

impl FlowState {
    pub fn name(self) -> &'static str {
        match self {
            FlowState::Con => "CON",
            FlowState::Req => "REQ",
            FlowState::Rst => "RST",
            FlowState::Fin => "FIN",
            FlowState::Int => "INT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub start_us: i64,
    pub end_us: i64,
    pub packets_a2b: u64,
    pub packets_b2a: u64,
    pub bytes_a2b: u64,
    pub bytes_b2a: u64,
    pub state: FlowState,
    /// First-seen TTL per direction.
    pub ttl_a2b: u8,
    pub ttl_b2a: Option<u8>,
    pub seq_base_a2b: Option<u32>,
    pub seq_base_b2a: Option<u32>,
    pub mss_a2b: Option<u16>,
    pub wscale_a2b: Option<u8>,
    /// Min/max payload-bearing TCP segment size in the a2b direction.
    pub min_seg_a2b: Option<u32>,
    pub max_seg_a2b: Option<u32>,
    /// Largest gap between consecutive a2b packets, microseconds.
    pub idle_max_a2b_us: i64,
    pub fin_pkts_a2b: u32,
    pub fin_a2b: bool,
    pub fin_b2a: bool,
    pub rst_seen: bool,
    pub handshake_complete: bool,
    /// Echo request seen from the initiator (ICMP flows).
    pub icmp_echo_req: bool,
}

impl FlowRecord {
    pub fn dur_seconds(&self) -> f64 {
        (self.end_us - self.start_us) as f64 * 1e-6
    }
}

/// Idle timeouts that close a flow, in seconds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowTimeouts {
    pub tcp: f64,
    pub other: f64,
}

impl Default for FlowTimeouts {
    fn default() -> Self {
        FlowTimeouts { tcp: 60.0, other: 30.0 }
    }
}

impl FlowTimeouts {
    fn for_proto_us(&self, proto: Proto) -> i64 {
        let secs = if proto == Proto::Tcp { self.tcp } else { self.other };
        (secs * 1e6) as i64
    }
}

type CanonKey = (Ipv4Addr, u16, Ipv4Addr, u16, Proto);

fn canon_key(p: &PacketRecord) -> CanonKey {
    let a = (p.src_ip, p.src_port);
    let b = (p.dst_ip, p.dst_port);
    if a <= b {
        (a.0, a.1, b.0, b.1, p.proto)
    } else {
        (b.0, b.1, a.0, a.1, p.proto)
    }
}

struct FlowBuild {
    rec: FlowRecord,
    last_us: i64,
    last_a2b_us: i64,
}

impl FlowBuild {
    fn new(p: &PacketRecord) -> FlowBuild {
        let key = FlowKey {
            initiator_ip: p.src_ip,
            responder_ip: p.dst_ip,
            initiator_port: p.src_port,
            responder_port: p.dst_port,
            proto: p.proto,
        };
        let mut b = FlowBuild {
            rec: FlowRecord {
                key,
                start_us: p.ts_us(),
                end_us: p.ts_us(),
                packets_a2b: 0,
                packets_b2a: 0,
                bytes_a2b: 0,
                bytes_b2a: 0,
                state: FlowState::Req,
                ttl_a2b: p.ttl,
                ttl_b2a: None,
                seq_base_a2b: None,
                seq_base_b2a: None,
                mss_a2b: None,
                wscale_a2b: None,
                min_seg_a2b: None,
                max_seg_a2b: None,
                idle_max_a2b_us: 0,
                fin_pkts_a2b: 0,
                fin_a2b: false,
                fin_b2a: false,
                rst_seen: false,
                handshake_complete: false,
                icmp_echo_req: false,
            },
            last_us: p.ts_us(),
            last_a2b_us: p.ts_us(),
        };
        b.add(p);
        b
    }

    fn is_a2b(&self, p: &PacketRecord) -> bool {
        p.src_ip == self.rec.key.initiator_ip && p.src_port == self.rec.key.initiator_port
    }

    fn add(&mut self, p: &PacketRecord) {
        let ts = p.ts_us();
        let a2b = self.is_a2b(p);
        self.rec.end_us = ts;
        self.last_us = ts;
        if a2b {
            if self.rec.packets_a2b > 0 {
                self.rec.idle_max_a2b_us = self.rec.idle_max_a2b_us.max(ts - self.last_a2b_us);
            }
            self.last_a2b_us = ts;
            self.rec.packets_a2b += 1;
            self.rec.bytes_a2b += p.wire_len as u64;
        } else {
            if self.rec.ttl_b2a.is_none() {
                self.rec.ttl_b2a = Some(p.ttl);
            }
            self.rec.packets_b2a += 1;
            self.rec.bytes_b2a += p.wire_len as u64;
        }
        match p.proto {
            Proto::Tcp => {
                if a2b {
                    if self.rec.seq_base_a2b.is_none() {
                        self.rec.seq_base_a2b = Some(p.seq);
                    }
                    if p.tcp_flags & TCP_SYN != 0 {
                        for opt in &p.tcp_options {
                            match opt {
                                TcpOption::Mss(v) => {
                                    if self.rec.mss_a2b.is_none() {
                                        self.rec.mss_a2b = Some(*v);
                                    }
                                }
                                TcpOption::WindowScale(v) => {
                                    if self.rec.wscale_a2b.is_none() {
                                        self.rec.wscale_a2b = Some(*v);
                                    }
                                }
                            }
                        }
                    }
                    if p.payload_len > 0 {
                        let len = p.payload_len;
                        self.rec.min_seg_a2b =
                            Some(self.rec.min_seg_a2b.map_or(len, |m| m.min(len)));
                        self.rec.max_seg_a2b =
                            Some(self.rec.max_seg_a2b.map_or(len, |m| m.max(len)));
                    }
                    if p.tcp_flags & TCP_FIN != 0 {
                        self.rec.fin_pkts_a2b += 1;
                        self.rec.fin_a2b = true;
                    }
                    // handshake completes on the initiator's ACK after SYN-ACK
                    if self.rec.packets_b2a > 0
                        && p.tcp_flags & TCP_ACK != 0
                        && p.tcp_flags & TCP_SYN == 0
                    {
                        self.rec.handshake_complete = true;
                    }
                } else {
                    if self.rec.seq_base_b2a.is_none() {
                        self.rec.seq_base_b2a = Some(p.seq);
                    }
                    if p.tcp_flags & TCP_FIN != 0 {
                        self.rec.fin_b2a = true;
                    }
                }
                if p.tcp_flags & TCP_RST != 0 {
                    self.rec.rst_seen = true;
                }
            }
            Proto::Icmp => {
                if a2b && p.icmp_type == 8 {
                    self.rec.icmp_echo_req = true;
                }
            }
            Proto::Udp => {}
        }
    }

    /// The flow no longer accepts a packet with these flags.
    fn is_closed_for(&self, p: &PacketRecord) -> bool {
        if self.rec.rst_seen {
            return true;
        }
        // graceful close: tolerate trailing pure ACKs of the FIN exchange
        self.rec.fin_a2b && self.rec.fin_b2a && p.tcp_flags != TCP_ACK
    }

    fn finish(mut self) -> FlowRecord {
        self.rec.state = flow_state(&self.rec);
        self.rec
    }
}

/// Classify a flow's final state.
///
/// RST wins over everything; FIN means a graceful close; CON requires an
/// established exchange (completed TCP handshake, or bidirectional non-TCP
/// traffic); a one-sided TCP flow or a lone ICMP echo request is a request
/// (REQ); any other one-sided non-TCP flow is interrupted (INT).
pub fn flow_state(f: &FlowRecord) -> FlowState {
    if f.rst_seen {
        return FlowState::Rst;
    }
    if f.fin_a2b && f.fin_b2a {
        return FlowState::Fin;
    }
    match f.key.proto {
        Proto::Tcp => {
            if f.handshake_complete && f.packets_b2a > 0 {
                FlowState::Con
            } else {
                FlowState::Req
            }
        }
        _ => {
            if f.packets_b2a > 0 {
                FlowState::Con
            } else if f.key.proto == Proto::Icmp && f.icmp_echo_req {
                FlowState::Req
            } else {
                FlowState::Int
            }
        }
    }
}

/// Group a time-ordered packet sequence into flows.
pub fn assemble_flows(packets: &[PacketRecord], timeouts: FlowTimeouts) -> Vec<FlowRecord> {
    let mut open: HashMap<CanonKey, FlowBuild> = HashMap::new();
    let mut done: Vec<FlowRecord> = Vec::new();
    for p in packets {
        let ck = canon_key(p);
        match open.get_mut(&ck) {
            Some(build) => {
                let expired = p.ts_us() - build.last_us > timeouts.for_proto_us(p.proto);
                if expired || build.is_closed_for(p) {
                    let old = open.remove(&ck).unwrap();
                    done.push(old.finish());
                    open.insert(ck, FlowBuild::new(p));
                } else {
                    build.add(p);
                }
            }
            None => {
                open.insert(ck, FlowBuild::new(p));
            }
        }
    }
    done.extend(open.into_values().map(FlowBuild::finish));
    done.sort_by_key(|a| (a.start_us, a.key));
    done
}

/// A numeric feature that may be missing, with the reason recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatCell {
    Val(f64),
    Missing(MissingReason),
}

impl FeatCell {
    pub fn value(self) -> Option<f64> {
        match self {
            FeatCell::Val(v) => Some(v),
            FeatCell::Missing(_) => None,
        }
    }
}

fn opt_tcp<T: Into<f64>>(proto: Proto, v: Option<T>) -> FeatCell {
    if proto != Proto::Tcp {
        FeatCell::Missing(MissingReason::Structural)
    } else {
        match v {
            Some(x) => FeatCell::Val(x.into()),
            None => FeatCell::Missing(MissingReason::Plausible),
        }
    }
}

/// The per-flow feature vector the dataset stage consumes. TCP-only fields
/// are structurally missing for UDP/ICMP flows; fields needing responder
/// traffic are plausibly missing when none was seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowFeatureVector {
    pub key: FlowKey,
    pub start_us: i64,
    pub mss_requested_a2b: FeatCell,
    pub dst_tcp_base: FeatCell,
    pub min_segm_size_a2b: FeatCell,
    pub max_segm_size_a2b: FeatCell,
    pub pc_ratio: f64,
    pub idletime_max_a2b: f64,
    pub state: FlowState,
    pub s_ttl: f64,
    pub d_ttl: FeatCell,
    pub dport: f64,
    pub dur: f64,
    pub s_mean_pkt_sz: f64,
    pub d_mean_pkt_sz: FeatCell,
    pub fin_pkts_a2b: FeatCell,
    pub adv_wind_scale_a2b: FeatCell,
    pub packets_a2b: f64,
    pub packets_b2a: f64,
    pub bytes_a2b: f64,
    pub bytes_b2a: f64,
}

pub fn extract_flow_features(f: &FlowRecord) -> FlowFeatureVector {
    let proto = f.key.proto;
    let total = (f.bytes_a2b + f.bytes_b2a) as f64;
    let pc_ratio = if total == 0.0 {
        0.0
    } else {
        (f.bytes_a2b as f64 - f.bytes_b2a as f64) / total
    };
    let d_ttl = match f.ttl_b2a {
        Some(t) => FeatCell::Val(t as f64),
        None => FeatCell::Missing(MissingReason::Plausible),
    };
    let d_mean = if f.packets_b2a > 0 {
        FeatCell::Val(f.bytes_b2a as f64 / f.packets_b2a as f64)
    } else {
        FeatCell::Missing(MissingReason::Plausible)
    };
    FlowFeatureVector {
        key: f.key,
        start_us: f.start_us,
        mss_requested_a2b: opt_tcp(proto, f.mss_a2b),
        dst_tcp_base: opt_tcp(proto, f.seq_base_b2a),
        min_segm_size_a2b: opt_tcp(proto, f.min_seg_a2b),
        max_segm_size_a2b: opt_tcp(proto, f.max_seg_a2b),
        pc_ratio,
        idletime_max_a2b: f.idle_max_a2b_us as f64 * 1e-6,
        state: f.state,
        s_ttl: f.ttl_a2b as f64,
        d_ttl,
        dport: f.key.responder_port as f64,
        dur: f.dur_seconds(),
        s_mean_pkt_sz: f.bytes_a2b as f64 / f.packets_a2b as f64,
        d_mean_pkt_sz: d_mean,
        fin_pkts_a2b: opt_tcp(proto, Some(f.fin_pkts_a2b as f64)),
        adv_wind_scale_a2b: opt_tcp(proto, f.wscale_a2b),
        packets_a2b: f.packets_a2b as f64,
        packets_b2a: f.packets_b2a as f64,
        bytes_a2b: f.bytes_a2b as f64,
        bytes_b2a: f.bytes_b2a as f64,
    }
}
