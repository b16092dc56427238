//! End-to-end runs of the `nvlife` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn nvlife(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvlife")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn data_rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

const SMALL_FD: &str = "[cache]\nvariant = \"FD\"\nsets = 64\nways = 8\n[endurance]\ncv = 0.3\n\
                        [forecast]\nnum_epochs = 8\n[workload]\nevents_per_mix = 4000\n";

#[test]
fn show_defaults_prints_a_loadable_config() {
    let dir = TempDir::new().unwrap();
    let out = nvlife(&["--show-defaults"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[cache]") && text.contains("variant = \"L2C2\""));
    std::fs::write(dir.path().join("d.toml"), &text).unwrap();
    let sim = nvlife(&["simulate", "--config", "d.toml", "--variant", "FD"], dir.path());
    assert_eq!(stdout_json(&sim)["variant"], "FD");
}

#[test]
fn compress_reports_encoding_and_class() {
    let dir = TempDir::new().unwrap();
    let zeros = "00".repeat(64);
    let v = stdout_json(&nvlife(&["compress", &zeros], dir.path()));
    assert_eq!(v["size"], 0);
    assert_eq!(v["class"], 0);

    let repeated = "0123456789abcdef".repeat(8);
    let v = stdout_json(&nvlife(&["compress", &repeated], dir.path()));
    assert_eq!(v["size"], 8);
    assert_eq!(v["payload"], "0123456789abcdef");

    let out = nvlife(&["compress", "abcd"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn rearrange_rotates_past_dead_bytes() {
    let dir = TempDir::new().unwrap();
    let v = stdout_json(&nvlife(&["rearrange", "--bitmap", "1101", "--gc", "1", "--ecb", "aabbcc"], dir.path()));
    assert_eq!(v["write_mask"], "1101");
    assert_eq!(v["frame"], "ccaa00bb");
}

#[test]
fn exit_codes_separate_error_kinds() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert_eq!(nvlife(&["rearrange", "--bitmap", "1001", "--ecb", "aabbcc"], p).status.code(), Some(4));
    assert_eq!(nvlife(&["simulate", "--variant", "L3"], p).status.code(), Some(2));
    assert_eq!(nvlife(&["simulate", "--config", "missing.toml"], p).status.code(), Some(2));
    std::fs::write(p.join("bad.toml"), "[cache]\nsets = 0\n").unwrap();
    assert_eq!(nvlife(&["simulate", "--config", "bad.toml"], p).status.code(), Some(2));
    std::fs::write(p.join("t.nvtrace"), "not a trace").unwrap();
    std::fs::write(p.join("t.toml"), "[workload]\ntraces = [\"t.nvtrace\"]\n").unwrap();
    assert_eq!(nvlife(&["simulate", "--config", "t.toml"], p).status.code(), Some(3));
    std::fs::write(p.join("m.toml"), "[workload]\ntraces = [\"absent.nvtrace\"]\n").unwrap();
    assert_eq!(nvlife(&["simulate", "--config", "m.toml"], p).status.code(), Some(3));
}

#[test]
fn indices_of_a_two_point_series() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let csv = "# peak_ipc: 2\n\
               t_seconds,capacity_fraction,ipc_norm,ipc,cc_0,cc_8,cc_16,cc_21,cc_23,cc_30,cc_36,cc_37,cc_44,cc_51,cc_58,cc_64,dead\n\
               0,1,1,2,0,0,0,0,0,0,0,0,0,0,0,4,0\n\
               100,0,0.5,1,0,0,0,0,0,0,0,0,0,0,0,0,4\n";
    std::fs::write(p.join("s.csv"), csv).unwrap();
    let v = stdout_json(&nvlife(&["indices", "--input", "s.csv", "--clock-hz", "1", "--cores", "1"], p));
    let s = &v["seconds"];
    // Capacity falls linearly from 1 to 0 over 100 s.
    assert!((s["t50c"].as_f64().unwrap() - 50.0).abs() < 1e-9);
    assert!((s["t90c"].as_f64().unwrap() - 10.0).abs() < 1e-9);
    assert!((s["t99c"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    // ipc_norm falls from 1 to 0.5.
    assert!((s["t90p"].as_f64().unwrap() - 20.0).abs() < 1e-9);
    // Throughput is the ipc, 2 at t = 0 and 1.5 at t = 50.
    assert!((s["i50c_horizon"].as_f64().unwrap() - 87.5).abs() < 1e-9);
}

#[test]
fn forecast_then_project() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    std::fs::write(p.join("fd.toml"), SMALL_FD).unwrap();
    let out = nvlife(
        &["--jobs", "2", "forecast", "--config", "fd.toml", "--series", "s.csv", "--indices", "i.json", "--checkpoint-dir", "ck"],
        p,
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let series = std::fs::read_to_string(p.join("s.csv")).unwrap();
    assert!(series.contains("# variant = \"FD\""));
    let rows = data_rows(&series);
    assert!(rows.len() >= 2);
    // With cv = 0.3 roughly a fifth of the frames start with a dead bit.
    assert!((rows[0][1] - 0.8).abs() < 0.05, "initial capacity {}", rows[0][1]);
    assert!(rows.last().unwrap()[1] <= 0.5);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0] && w[1][1] <= w[0][1]));

    let report: Value = serde_json::from_str(&std::fs::read_to_string(p.join("i.json")).unwrap()).unwrap();
    let t50 = report["indices"]["seconds"]["t50c"].as_f64().unwrap();
    let years = report["indices"]["years"]["t50c"].as_f64().unwrap();
    assert!((t50 / years - 365.25 * 86400.0).abs() < 1e-3);
    assert_eq!(report["config"]["cache"]["variant"], "FD");
    assert!(p.join("ck/state.json").exists());

    let out = nvlife(&["project", "--k", "10", "--input", "s.csv", "--output", "p.csv"], p);
    assert!(out.status.success());
    let projected = data_rows(&std::fs::read_to_string(p.join("p.csv")).unwrap());
    assert_eq!(projected.len(), rows.len());
    for (a, b) in rows.iter().zip(&projected) {
        assert_eq!(b[0], a[0] * 10.0);
        assert_eq!(&b[1..], &a[1..]);
    }

    let resumed = nvlife(&["forecast", "--config", "fd.toml", "--checkpoint-dir", "ck", "--resume", "--indices", "j.json"], p);
    assert!(resumed.status.success());
    assert_eq!(data_rows(&String::from_utf8(resumed.stdout).unwrap()), rows);
}
