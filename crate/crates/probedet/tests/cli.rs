//! End-to-end checks of the binary's contracts: artifact plumbing between
//! stages, exit codes, and byte-identical reproduction.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_probedet")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn scenario_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    fs::write(
        &path,
        r#"{
            "seed": 7,
            "scenario": {
                "n_benign_flows": 120,
                "bursts": [
                    {"scan": "syn", "source_ip": [10,0,9,1], "target_ip": [192,168,1,10],
                     "n_targets": 1, "port_lo": 1, "port_hi": 60, "gap_secs": 0.01, "start_secs": 20.0},
                    {"scan": "fin", "source_ip": [10,0,9,2], "target_ip": [192,168,1,11],
                     "n_targets": 1, "port_lo": 1, "port_hi": 40, "gap_secs": 0.02, "start_secs": 60.0}
                ]
            }
        }"#,
    )
    .unwrap();
    path.display().to_string()
}

/// synth -> extract -> dataset -> train -> eval, checking every artifact and
/// the manifest along the way.
#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let cfg = scenario_config(tmp.path());
    let p = |name: &str| tmp.path().join(name).display().to_string();

    assert_ok(&run(&["synth", "--config", &cfg, "--out", out]));
    assert!(tmp.path().join("capture.pcap").exists());
    assert!(tmp.path().join("truth.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("synth_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 7);
    assert_ne!(manifest["config_sha256"], "none");

    assert_ok(&run(&["extract", "--input", &p("capture.pcap"), "--out", out]));
    assert_ok(&run(&[
        "dataset",
        "--flows", &p("flows.csv"),
        "--session", &p("session.csv"),
        "--temporal", &p("temporal.csv"),
        "--truth", &p("truth.csv"),
        "--config", &cfg,
        "--out", out,
    ]));
    for f in ["train.csv", "val.csv", "test.csv", "prep_report.json"] {
        assert!(tmp.path().join(f).exists(), "missing {f}");
    }

    assert_ok(&run(&[
        "train", "--train", &p("train.csv"), "--model", "ensemble", "--seed", "7", "--out", out,
    ]));
    assert_ok(&run(&["eval", "--test", &p("test.csv"), "--model", &p("model.json"), "--out", out]));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("eval.json")).unwrap()).unwrap();
    let f1 = report["metrics"]["f1"].as_f64().unwrap();
    assert!(f1 > 0.9, "pipeline f1 {f1}");
    let total = report["matrix"]["tp"].as_u64().unwrap()
        + report["matrix"]["fp"].as_u64().unwrap()
        + report["matrix"]["fn_"].as_u64().unwrap()
        + report["matrix"]["tn"].as_u64().unwrap();
    assert!(total > 0);
}

/// A 24-byte pcap (header only) extracts to empty feature CSVs with exit 0.
#[test]
fn empty_pcap_extracts_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let pcap = tmp.path().join("empty.pcap");
    let mut header = Vec::new();
    header.extend_from_slice(&0xa1b2_c3d4u32.to_le_bytes());
    header.extend_from_slice(&2u16.to_le_bytes()); // version 2.4
    header.extend_from_slice(&4u16.to_le_bytes());
    header.extend_from_slice(&[0u8; 8]); // thiszone + sigfigs
    header.extend_from_slice(&65535u32.to_le_bytes()); // snaplen
    header.extend_from_slice(&1u32.to_le_bytes()); // ethernet
    assert_eq!(header.len(), 24);
    fs::write(&pcap, header).unwrap();

    let out = run(&[
        "extract",
        "--input", pcap.to_str().unwrap(),
        "--out", tmp.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    let flows = fs::read_to_string(tmp.path().join("flows.csv")).unwrap();
    assert_eq!(flows.lines().count(), 1, "header only: {flows}");
}

/// Mismatched prediction/label row counts are an input error: exit 2.
#[test]
fn eval_row_mismatch_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let cfg = scenario_config(tmp.path());
    let p = |name: &str| tmp.path().join(name).display().to_string();
    assert_ok(&run(&["synth", "--config", &cfg, "--out", out]));
    assert_ok(&run(&["extract", "--input", &p("capture.pcap"), "--out", out]));
    assert_ok(&run(&[
        "dataset",
        "--flows", &p("flows.csv"),
        "--session", &p("session.csv"),
        "--temporal", &p("temporal.csv"),
        "--truth", &p("truth.csv"),
        "--config", &cfg,
        "--out", out,
    ]));
    fs::write(tmp.path().join("pred.csv"), "pred\n1\n0\n").unwrap();
    let res = run(&["eval", "--test", &p("test.csv"), "--pred", &p("pred.csv"), "--out", out]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}

/// Bad inputs and configs exit 2 without panicking.
#[test]
fn invalid_inputs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    // missing file
    let res = run(&["extract", "--input", "/nonexistent.pcap", "--out", out]);
    assert_eq!(res.status.code(), Some(2));
    // malformed config JSON
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    let res = run(&["synth", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(res.status.code(), Some(2));
    // garbage pcap magic
    let garbage = tmp.path().join("garbage.pcap");
    fs::write(&garbage, [0u8; 64]).unwrap();
    let res = run(&["extract", "--input", garbage.to_str().unwrap(), "--out", out]);
    assert_eq!(res.status.code(), Some(2));
}

/// Same seed and config reproduce byte-identical artifacts.
#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scenario_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = dir.to_str().unwrap();
        assert_ok(&run(&["synth", "--config", &cfg, "--out", out]));
        let p = |name: &str| dir.join(name).display().to_string();
        assert_ok(&run(&["extract", "--input", &p("capture.pcap"), "--out", out]));
        assert_ok(&run(&[
            "dataset",
            "--flows", &p("flows.csv"),
            "--session", &p("session.csv"),
            "--temporal", &p("temporal.csv"),
            "--truth", &p("truth.csv"),
            "--config", &cfg,
            "--out", out,
        ]));
    }
    for f in ["capture.pcap", "truth.csv", "flows.csv", "train.csv", "test.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}
