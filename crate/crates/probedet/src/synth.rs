//! Deterministic labeled-traffic generator: well-formed benign sessions
//! interleaved with nmap-style probing bursts, with per-flow ground truth.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capture::{PacketRecord, Proto, TcpOption, TCP_ACK, TCP_FIN, TCP_PSH, TCP_RST, TCP_SYN, TCP_URG};
use crate::flow::FlowKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanType {
    Syn,
    Fin,
    Null,
    Xmas,
    PingSweep,
    Connect,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanBurst {
    pub scan: ScanType,
    pub source_ip: [u8; 4],
    /// First target address; ping sweeps walk `n_targets` consecutive hosts,
    /// port scans stay on this one.
    pub target_ip: [u8; 4],
    pub n_targets: u16,
    pub port_lo: u16,
    pub port_hi: u16,
    /// Seconds between consecutive probes; must be positive.
    pub gap_secs: f64,
    /// Offset of the first probe from scenario start.
    pub start_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenignProfile {
    pub mean_duration_secs: f64,
    pub mean_bytes: f64,
    pub mean_packets: f64,
}

impl Default for BenignProfile {
    fn default() -> Self {
        // institutional capture averages used as generator targets
        BenignProfile { mean_duration_secs: 6.06, mean_bytes: 41385.0, mean_packets: 62.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_benign_flows: usize,
    pub bursts: Vec<ScanBurst>,
    pub profile: BenignProfile,
    /// Benign session starts are uniform over this horizon.
    pub span_secs: f64,
    /// Fraction of scanned ports that answer SYN-ACK instead of RST.
    pub open_port_fraction: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_benign_flows: 100,
            bursts: Vec::new(),
            profile: BenignProfile::default(),
            span_secs: 300.0,
            open_port_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    /// 1 = probing, 0 = benign; covers every generated flow key.
    pub labels: HashMap<FlowKey, u8>,
}

/// (server port, proto) for the common benign services.
const SERVICES: [(u16, Proto); 7] = [
    (80, Proto::Tcp),   // HTTP
    (53, Proto::Udp),   // DNS
    (23, Proto::Tcp),   // telnet
    (445, Proto::Tcp),  // SMB
    (1433, Proto::Tcp), // SQL
    (25, Proto::Tcp),   // SMTP
    (22, Proto::Tcp),   // SSH
];

#[allow(clippy::too_many_arguments)]
fn ts_pkt(t_us: i64, src: Ipv4Addr, sport: u16, dst: Ipv4Addr, dport: u16, proto: Proto, flags: u8, icmp_type: u8, payload: u32) -> PacketRecord {
    let mut p = PacketRecord {
        ts_sec: (t_us / 1_000_000) as u32,
        ts_usec: (t_us % 1_000_000) as u32,
        src_ip: src,
        dst_ip: dst,
        src_port: sport,
        dst_port: dport,
        proto,
        tcp_flags: if proto == Proto::Tcp { flags } else { 0 },
        icmp_type,
        ttl: 64,
        wire_len: 0,
        payload_len: payload,
        seq: 1,
        window: 64240,
        tcp_options: Vec::new(),
    };
    p.wire_len = p.computed_wire_len();
    p
}

fn key_for(initiator: Ipv4Addr, iport: u16, responder: Ipv4Addr, rport: u16, proto: Proto) -> FlowKey {
    FlowKey {
        initiator_ip: initiator,
        responder_ip: responder,
        initiator_port: iport,
        responder_port: rport,
        proto,
    }
}

/// One complete benign session starting at `start_us`; unique `sport` keeps
/// flow keys unambiguous.
fn gen_session(
    profile: &BenignProfile,
    start_us: i64,
    sport: u16,
    rng: &mut ChaCha8Rng,
) -> (Vec<PacketRecord>, FlowKey) {
    let client = Ipv4Addr::new(192, 168, 1, rng.gen_range(2..250));
    let (service_port, proto) = SERVICES[rng.gen_range(0..SERVICES.len())];
    let server = Ipv4Addr::new(10, 0, 0, 2 + (service_port % 200) as u8);
    let key = key_for(client, sport, server, service_port, proto);

    if proto == Proto::Udp {
        // request/response pair, e.g. a DNS lookup
        let gap = rng.gen_range(1_000..40_000);
        let pkts = vec![
            ts_pkt(start_us, client, sport, server, service_port, proto, 0, 0, rng.gen_range(30..90)),
            ts_pkt(start_us + gap, server, service_port, client, sport, proto, 0, 0, rng.gen_range(60..400)),
        ];
        return (pkts, key);
    }

    // exponential-ish spread around the profile means, clamped to keep
    // every intra-session gap far below the assembler's idle timeout
    let dur_secs = (-profile.mean_duration_secs * (1.0 - rng.gen::<f64>()).ln()).clamp(0.05, 45.0);
    let total_bytes = (profile.mean_bytes * rng.gen_range(0.5..1.5)) as u64;
    let n_data = ((profile.mean_packets * rng.gen_range(0.5..1.5)) as u64).max(2) as usize;
    let dur_us = (dur_secs * 1e6) as i64;
    let step = dur_us / (n_data as i64 + 6);

    let mut pkts = Vec::with_capacity(n_data + 7);
    let mut t = start_us;
    let mut syn = ts_pkt(t, client, sport, server, service_port, proto, TCP_SYN, 0, 0);
    syn.tcp_options = vec![TcpOption::Mss(1460), TcpOption::WindowScale(7)];
    syn.wire_len = syn.computed_wire_len();
    pkts.push(syn);
    t += step;
    pkts.push(ts_pkt(t, server, service_port, client, sport, proto, TCP_SYN | TCP_ACK, 0, 0));
    t += step;
    pkts.push(ts_pkt(t, client, sport, server, service_port, proto, TCP_ACK, 0, 0));
    let per_pkt = (total_bytes / n_data as u64).clamp(1, 1460) as u32;
    for i in 0..n_data {
        t += step;
        // responses dominate the byte mix, like real client/server traffic
        if i % 4 == 0 {
            pkts.push(ts_pkt(t, client, sport, server, service_port, proto, TCP_ACK | TCP_PSH, 0, per_pkt / 4 + 1));
        } else {
            pkts.push(ts_pkt(t, server, service_port, client, sport, proto, TCP_ACK | TCP_PSH, 0, per_pkt));
        }
    }
    t += step;
    pkts.push(ts_pkt(t, client, sport, server, service_port, proto, TCP_FIN | TCP_ACK, 0, 0));
    t += step;
    pkts.push(ts_pkt(t, server, service_port, client, sport, proto, TCP_FIN | TCP_ACK, 0, 0));
    t += step;
    pkts.push(ts_pkt(t, client, sport, server, service_port, proto, TCP_ACK, 0, 0));
    (pkts, key)
}

pub fn gen_benign(
    profile: &BenignProfile,
    n: usize,
    span_secs: f64,
    seed: u64,
) -> (Vec<PacketRecord>, GroundTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut packets = Vec::new();
    let mut truth = GroundTruth::default();
    for i in 0..n {
        let start_us = (rng.gen::<f64>() * span_secs * 1e6) as i64;
        let sport = 20000 + (i % 40000) as u16;
        let (pkts, key) = gen_session(profile, start_us, sport, &mut rng);
        packets.extend(pkts);
        truth.labels.insert(key, 0);
    }
    (packets, truth)
}

pub fn gen_probe(
    burst: &ScanBurst,
    open_port_fraction: f64,
    seed: u64,
) -> (Vec<PacketRecord>, GroundTruth) {
    assert!(burst.gap_secs > 0.0, "inter-probe gap must be positive");
    assert!(burst.port_hi >= burst.port_lo, "empty port range");
    assert!(burst.n_targets >= 1, "empty target range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src: Ipv4Addr = burst.source_ip.into();
    let mut packets = Vec::new();
    let mut truth = GroundTruth::default();
    let mut t_us = (burst.start_secs * 1e6) as i64;
    let gap_us = (burst.gap_secs * 1e6) as i64;

    if burst.scan == ScanType::PingSweep {
        let base = u32::from(Ipv4Addr::from(burst.target_ip));
        for i in 0..burst.n_targets {
            let dst = Ipv4Addr::from(base + i as u32);
            packets.push(ts_pkt(t_us, src, 0, dst, 0, Proto::Icmp, 0, 8, 0));
            truth.labels.insert(key_for(src, 0, dst, 0, Proto::Icmp), 1);
            t_us += gap_us;
        }
        return (packets, truth);
    }

    let dst: Ipv4Addr = burst.target_ip.into();
    for (i, port) in (burst.port_lo..=burst.port_hi).enumerate() {
        let sport = 40000 + (i % 20000) as u16;
        let open = rng.gen::<f64>() < open_port_fraction;
        match burst.scan {
            ScanType::Syn => {
                packets.push(ts_pkt(t_us, src, sport, dst, port, Proto::Tcp, TCP_SYN, 0, 0));
                if open {
                    packets.push(ts_pkt(t_us + 400, dst, port, src, sport, Proto::Tcp, TCP_SYN | TCP_ACK, 0, 0));
                    packets.push(ts_pkt(t_us + 800, src, sport, dst, port, Proto::Tcp, TCP_RST, 0, 0));
                } else {
                    packets.push(ts_pkt(t_us + 400, dst, port, src, sport, Proto::Tcp, TCP_RST | TCP_ACK, 0, 0));
                }
            }
            ScanType::Fin | ScanType::Null | ScanType::Xmas => {
                let mask = match burst.scan {
                    ScanType::Fin => TCP_FIN,
                    ScanType::Null => 0x00,
                    _ => TCP_FIN | TCP_PSH | TCP_URG, // xmas
                };
                packets.push(ts_pkt(t_us, src, sport, dst, port, Proto::Tcp, mask, 0, 0));
                if !open {
                    // closed ports answer stealth probes with RST
                    packets.push(ts_pkt(t_us + 400, dst, port, src, sport, Proto::Tcp, TCP_RST | TCP_ACK, 0, 0));
                }
            }
            ScanType::Connect => {
                packets.push(ts_pkt(t_us, src, sport, dst, port, Proto::Tcp, TCP_SYN, 0, 0));
                if open {
                    packets.push(ts_pkt(t_us + 400, dst, port, src, sport, Proto::Tcp, TCP_SYN | TCP_ACK, 0, 0));
                    packets.push(ts_pkt(t_us + 800, src, sport, dst, port, Proto::Tcp, TCP_ACK, 0, 0));
                    packets.push(ts_pkt(t_us + 1200, src, sport, dst, port, Proto::Tcp, TCP_RST, 0, 0));
                } else {
                    packets.push(ts_pkt(t_us + 400, dst, port, src, sport, Proto::Tcp, TCP_RST | TCP_ACK, 0, 0));
                }
            }
            ScanType::PingSweep => unreachable!(),
        }
        truth.labels.insert(key_for(src, sport, dst, port, Proto::Tcp), 1);
        t_us += gap_us;
    }
    (packets, truth)
}

/// All scenario packets in global time order plus the merged ground truth.
pub fn gen_dataset(scenario: &ScenarioConfig) -> (Vec<PacketRecord>, GroundTruth) {
    let (mut packets, mut truth) =
        gen_benign(&scenario.profile, scenario.n_benign_flows, scenario.span_secs, scenario.seed);
    for (bi, burst) in scenario.bursts.iter().enumerate() {
        let (pkts, t) = gen_probe(burst, scenario.open_port_fraction, scenario.seed.wrapping_add(bi as u64 + 1));
        packets.extend(pkts);
        truth.labels.extend(t.labels);
    }
    packets.sort_by_key(|p| (p.ts_sec, p.ts_usec));
    (packets, truth)
}

/// RFC-4180 label file keyed like assembled flows.
pub fn truth_to_csv(truth: &GroundTruth) -> String {
    let mut rows: Vec<_> = truth.labels.iter().collect();
    rows.sort();
    let mut out = String::from("initiator_ip,initiator_port,responder_ip,responder_port,proto,label\n");
    for (k, label) in rows {
        let proto = match k.proto {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
            Proto::Icmp => "icmp",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            k.initiator_ip, k.initiator_port, k.responder_ip, k.responder_port, proto, label
        ));
    }
    out
}

pub fn truth_from_csv(text: &str) -> Result<GroundTruth, String> {
    let mut truth = GroundTruth::default();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(format!("line {}: expected 6 fields", ln + 1));
        }
        let parse = |s: &str, what: &str| -> Result<u16, String> {
            s.parse().map_err(|_| format!("line {}: bad {what}", ln + 1))
        };
        let proto = match parts[4] {
            "tcp" => Proto::Tcp,
            "udp" => Proto::Udp,
            "icmp" => Proto::Icmp,
            other => return Err(format!("line {}: unknown proto {other:?}", ln + 1)),
        };
        let key = FlowKey {
            initiator_ip: parts[0].parse().map_err(|_| format!("line {}: bad ip", ln + 1))?,
            initiator_port: parse(parts[1], "port")?,
            responder_ip: parts[2].parse().map_err(|_| format!("line {}: bad ip", ln + 1))?,
            responder_port: parse(parts[3], "port")?,
            proto,
        };
        truth.labels.insert(key, if parts[5] == "1" { 1 } else { 0 });
    }
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{assemble_flows, FlowState, FlowTimeouts};
    use crate::temporal::{classify_probe_signal, ProbeSignal};

    #[test]
    fn single_benign_session_assembles_cleanly() {
        let (pkts, truth) = gen_benign(&BenignProfile::default(), 1, 10.0, 4);
        let flows = assemble_flows(&pkts, FlowTimeouts::default());
        assert_eq!(flows.len(), 1);
        assert!(matches!(flows[0].state, FlowState::Con | FlowState::Fin));
        assert!(truth.labels.contains_key(&flows[0].key));
    }

    #[test]
    fn benign_duration_matches_profile() {
        let profile = BenignProfile::default();
        let (pkts, _) = gen_benign(&profile, 1000, 5000.0, 7);
        let flows = assemble_flows(&pkts, FlowTimeouts::default());
        let tcp: Vec<_> = flows.iter().filter(|f| f.key.proto == Proto::Tcp).collect();
        let mean: f64 = tcp.iter().map(|f| f.dur_seconds()).sum::<f64>() / tcp.len() as f64;
        assert!(
            (mean - profile.mean_duration_secs).abs() / profile.mean_duration_secs < 0.10,
            "mean session duration {mean}"
        );
    }

    #[test]
    fn syn_scan_produces_one_flow_per_port() {
        let burst = ScanBurst {
            scan: ScanType::Syn,
            source_ip: [172, 16, 0, 9],
            target_ip: [10, 0, 0, 5],
            n_targets: 1,
            port_lo: 1,
            port_hi: 100,
            gap_secs: 0.01,
            start_secs: 0.0,
        };
        let (pkts, truth) = gen_probe(&burst, 0.1, 3);
        let flows = assemble_flows(&pkts, FlowTimeouts::default());
        assert_eq!(flows.len(), 100);
        assert_eq!(truth.labels.len(), 100);
        for f in &flows {
            assert_eq!(truth.labels[&f.key], 1);
        }
        // every initial probe packet carries exactly the SYN mask
        let syn_count = pkts.iter().filter(|p| classify_probe_signal(p) == ProbeSignal::Syn).count();
        assert_eq!(syn_count, 100);
    }

    #[test]
    fn stealth_masks_classify_as_intended() {
        for (scan, want) in [
            (ScanType::Fin, ProbeSignal::Fin),
            (ScanType::Null, ProbeSignal::Null),
            (ScanType::Xmas, ProbeSignal::Xmas),
        ] {
            let burst = ScanBurst {
                scan,
                source_ip: [172, 16, 0, 9],
                target_ip: [10, 0, 0, 5],
                n_targets: 1,
                port_lo: 1000,
                port_hi: 1031,
                gap_secs: 0.05,
                start_secs: 0.0,
            };
            let (pkts, _) = gen_probe(&burst, 0.0, 1);
            let probes: Vec<_> = pkts.iter().filter(|p| p.src_ip == Ipv4Addr::new(172, 16, 0, 9)).collect();
            assert_eq!(probes.len(), 32);
            for p in probes {
                assert_eq!(classify_probe_signal(p), want, "{scan:?}");
            }
        }
    }

    #[test]
    fn ping_sweep_bounded_by_target_count() {
        let burst = ScanBurst {
            scan: ScanType::PingSweep,
            source_ip: [172, 16, 0, 9],
            target_ip: [10, 0, 1, 1],
            n_targets: 254,
            port_lo: 0,
            port_hi: 0,
            gap_secs: 0.02,
            start_secs: 0.0,
        };
        let (pkts, truth) = gen_probe(&burst, 0.1, 2);
        let flows = assemble_flows(&pkts, FlowTimeouts::default());
        assert!(flows.len() <= 254);
        assert_eq!(truth.labels.len(), 254);
        assert!(pkts.iter().all(|p| p.proto == Proto::Icmp && p.icmp_type == 8));
    }

    #[test]
    fn dataset_is_time_ordered_with_full_coverage() {
        let scenario = ScenarioConfig {
            n_benign_flows: 50,
            bursts: vec![ScanBurst {
                scan: ScanType::Connect,
                source_ip: [172, 16, 0, 7],
                target_ip: [10, 0, 0, 5],
                n_targets: 1,
                port_lo: 1,
                port_hi: 40,
                gap_secs: 0.1,
                start_secs: 3.0,
            }],
            span_secs: 60.0,
            ..Default::default()
        };
        let (pkts, truth) = gen_dataset(&scenario);
        for w in pkts.windows(2) {
            assert!((w[0].ts_sec, w[0].ts_usec) <= (w[1].ts_sec, w[1].ts_usec));
        }
        let flows = assemble_flows(&pkts, FlowTimeouts::default());
        for f in &flows {
            assert!(truth.labels.contains_key(&f.key), "uncovered flow {:?}", f.key);
        }
        assert_eq!(truth.labels.len(), 90);
    }

    #[test]
    fn determinism_down_to_pcap_bytes() {
        let scenario = ScenarioConfig {
            n_benign_flows: 30,
            bursts: vec![ScanBurst {
                scan: ScanType::Syn,
                source_ip: [172, 16, 0, 7],
                target_ip: [10, 0, 0, 5],
                n_targets: 1,
                port_lo: 1,
                port_hi: 25,
                gap_secs: 0.1,
                start_secs: 1.0,
            }],
            ..Default::default()
        };
        let (a, _) = gen_dataset(&scenario);
        let (b, _) = gen_dataset(&scenario);
        let bytes_a = crate::capture::write_pcap(&a);
        let bytes_b = crate::capture::write_pcap(&b);
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn truth_csv_round_trips() {
        let scenario = ScenarioConfig { n_benign_flows: 20, ..Default::default() };
        let (_, truth) = gen_dataset(&scenario);
        let csv = truth_to_csv(&truth);
        let back = truth_from_csv(&csv).unwrap();
        assert_eq!(back.labels, truth.labels);
    }
}
