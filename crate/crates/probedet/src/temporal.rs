//! Probe-signal classification and per-flow windowed signal counting.
//!
//! Each packet maps to at most one probe signal (nmap-style flag patterns
//! plus ICMP echo requests). For every flow, the counters tally packets from
//! the flow's initiator carrying each signal inside a 2-second window
//! anchored at the flow's start.

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::capture::{PacketRecord, Proto};
use crate::flow::{FlowKey, FlowRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProbeSignal {
    IcmpEcho,
    Syn,
    SynAck,
    Null,
    Fin,
    Xmas,
    FinAck,
    None,
}

pub const SIGNAL_COUNT: usize = 7;

pub const SIGNAL_NAMES: [&str; SIGNAL_COUNT] = [
    "icmp_count",
    "syn_count",
    "synack_count",
    "null_count",
    "fin_count",
    "xmas_count",
    "finack_count",
];

impl ProbeSignal {
    /// Counter slot for this signal; `None` for non-signals.
    pub fn index(self) -> Option<usize> {
        match self {
            ProbeSignal::IcmpEcho => Some(0),
            ProbeSignal::Syn => Some(1),
            ProbeSignal::SynAck => Some(2),
            ProbeSignal::Null => Some(3),
            ProbeSignal::Fin => Some(4),
            ProbeSignal::Xmas => Some(5),
            ProbeSignal::FinAck => Some(6),
            ProbeSignal::None => None,
        }
    }
}

/// Map a packet to its probe signal by exact TCP flag mask (or ICMP echo
/// request). Anything else, including all UDP, is `None`.
pub fn classify_probe_signal(p: &PacketRecord) -> ProbeSignal {
    match p.proto {
        Proto::Icmp => {
            if p.icmp_type == 8 {
                ProbeSignal::IcmpEcho
            } else {
                ProbeSignal::None
            }
        }
        Proto::Tcp => match p.tcp_flags {
            0x02 => ProbeSignal::Syn,
            0x12 => ProbeSignal::SynAck,
            0x00 => ProbeSignal::Null,
            0x01 => ProbeSignal::Fin,
            0x29 => ProbeSignal::Xmas,
            0x11 => ProbeSignal::FinAck,
            _ => ProbeSignal::None,
        },
        Proto::Udp => ProbeSignal::None,
    }
}

/// Whether the window extends forward from the flow start or ends at it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WindowAnchor {
    #[default]
    Forward,
    Trailing,
}

/// Signal counters for one flow's window, keyed like the flow itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalFeatureRow {
    pub key: FlowKey,
    pub start_us: i64,
    pub src_ip: Ipv4Addr,
    pub counts: [u64; SIGNAL_COUNT],
}

impl TemporalFeatureRow {
    pub fn count(&self, s: ProbeSignal) -> u64 {
        s.index().map(|i| self.counts[i]).unwrap_or(0)
    }
}

/// Count probe signals from each flow's initiator within the window.
/// `packets` must be time-ordered (same order the assembler consumed).
pub fn count_signals_windowed(
    packets: &[PacketRecord],
    flows: &[FlowRecord],
    window_secs: f64,
    anchor: WindowAnchor,
) -> Vec<TemporalFeatureRow> {
    assert!(window_secs > 0.0, "window must be positive");
    let window_us = (window_secs * 1e6) as i64;
    let ts: Vec<i64> = packets.iter().map(|p| p.ts_us()).collect();
    debug_assert!(ts.windows(2).all(|w| w[0] <= w[1]), "packets must be time-ordered");
    let signals: Vec<ProbeSignal> = packets.iter().map(classify_probe_signal).collect();
    flows
        .iter()
        .map(|f| {
            // half-open [lo, hi): forward [t0, t0+w), trailing (t0-w, t0]
            let (lo_ts, hi_ts) = match anchor {
                WindowAnchor::Forward => (f.start_us, f.start_us + window_us),
                WindowAnchor::Trailing => (f.start_us - window_us + 1, f.start_us + 1),
            };
            let lo = ts.partition_point(|&t| t < lo_ts);
            let mut counts = [0u64; SIGNAL_COUNT];
            for i in lo..packets.len() {
                if ts[i] >= hi_ts {
                    break;
                }
                if packets[i].src_ip != f.key.initiator_ip {
                    continue;
                }
                if let Some(slot) = signals[i].index() {
                    counts[slot] += 1;
                }
            }
            TemporalFeatureRow {
                key: f.key,
                start_us: f.start_us,
                src_ip: f.key.initiator_ip,
                counts,
            }
        })
        .collect()
}
