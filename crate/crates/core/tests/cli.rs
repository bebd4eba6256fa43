use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use carshare::netmodel::network_from_rates;
use tempfile::TempDir;

fn carshare(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carshare"))
        .args(args)
        .env("CARSHARE_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn symmetric_spec(dir: &TempDir) -> PathBuf {
    let spec = network_from_rates(
        &[1.0, 1.0, 1.0],
        &[
            (0, 1, 0.5, 0.5),
            (0, 2, 0.5, 0.5),
            (1, 0, 0.5, 0.5),
            (1, 2, 0.5, 0.5),
            (2, 0, 0.5, 0.5),
            (2, 1, 0.5, 0.5),
        ],
        6,
    )
    .unwrap();
    write(dir, "sym.json", &spec.to_json_string())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_writes_metrics_and_manifest() {
    let dir = TempDir::new().unwrap();
    let spec = symmetric_spec(&dir);
    let out = dir.path().join("out");
    let r = carshare(&["solve", s(&spec), "--fleet", "1,6"], &out);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["metrics_N1.csv", "metrics_N6.json", "availability.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "solve");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics_N1.json")).unwrap()).unwrap();
    let util: Vec<f64> = m["metrics"]["utilization"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(util.iter().all(|&u| (u - util[0]).abs() < 1e-12));
}

#[test]
fn out_dir_flag_beats_environment() {
    let dir = TempDir::new().unwrap();
    let spec = symmetric_spec(&dir);
    let env_out = dir.path().join("env");
    let flag_out = dir.path().join("flag");
    let r = carshare(&["--out-dir", s(&flag_out), "solve", s(&spec)], &env_out);
    assert!(r.status.success());
    assert!(flag_out.join("manifest.json").exists());
    assert!(!env_out.exists());
}

#[test]
fn input_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    assert_eq!(carshare(&["solve", "/no/such/file.json"], &out).status.code(), Some(2));
    let bad = write(&dir, "bad.json", "{\"stations\": 3}");
    assert_eq!(carshare(&["solve", s(&bad)], &out).status.code(), Some(2));
    let garbage = write(&dir, "trace.csv", "this,is,not\na,trace,at all\n");
    assert_eq!(carshare(&["estimate", s(&garbage)], &out).status.code(), Some(2));
    assert_eq!(
        carshare(&["relocq", "--lambda", "0.5", "--mu", "1:0"], &out)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(carshare(&["bogus"], &out).status.code(), Some(2));
    let spec = symmetric_spec(&dir);
    assert_eq!(
        carshare(&["simulate", s(&spec), "--policy", "sideways"], &out)
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = TempDir::new().unwrap();
    let spec = symmetric_spec(&dir);
    let cfg = write(&dir, "cfg.json", "{\"horizon\": 10, \"colour\": \"red\"}");
    let r = carshare(&["simulate", s(&spec), "--config", s(&cfg)], &dir.path().join("out"));
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn unstable_queue_exits_5() {
    let dir = TempDir::new().unwrap();
    let r = carshare(
        &["relocq", "--lambda", "5", "--mu", "1:0.2,2:0.8"],
        &dir.path().join("out"),
    );
    assert_eq!(r.status.code(), Some(5));
}

#[test]
fn numeric_overflow_exits_3() {
    let dir = TempDir::new().unwrap();
    let spec = network_from_rates(&[1e6, 1e6], &[(0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0)], 3000).unwrap();
    let path = write(&dir, "wide.json", &spec.to_json_string());
    let r = carshare(&["solve", s(&path)], &dir.path().join("out"));
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn one_way_trips_exit_4() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("event_type,timestamp,vehicle_id,lat,lon\n");
    for v in 0..5 {
        text += &format!("pickup,2024-01-01T0{v}:00:00Z,car{v},52.3700,4.8900\n");
        text += &format!("dropoff,2024-01-01T0{v}:30:00Z,car{v},52.4000,4.9500\n");
    }
    let trace = write(&dir, "trace.csv", &text);
    let r = carshare(&["estimate", s(&trace)], &dir.path().join("out"));
    assert_eq!(r.status.code(), Some(4), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn zero_relocation_matches_none() {
    let dir = TempDir::new().unwrap();
    let spec = symmetric_spec(&dir);
    let run = |policy: &str| {
        let out = dir.path().join(policy.replace(':', "_"));
        let r = carshare(
            &[
                "simulate",
                s(&spec),
                "--policy",
                policy,
                "--horizon",
                "100",
                "--reps",
                "3",
                "--seed",
                "4",
            ],
            &out,
        );
        assert!(r.status.success());
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
        v[0]["availability"].clone()
    };
    assert_eq!(run("none"), run("uniform:0"));
}

#[test]
fn config_file_supplies_flags() {
    let dir = TempDir::new().unwrap();
    let spec = symmetric_spec(&dir);
    let cfg = write(&dir, "cfg.json", "{\"horizon\": 50, \"reps\": 2, \"seed\": 3}");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(carshare(&["simulate", s(&spec), "--config", s(&cfg)], &a)
        .status
        .success());
    assert!(carshare(
        &["simulate", s(&spec), "--horizon", "50", "--reps", "2", "--seed", "3"],
        &b
    )
    .status
    .success());
    assert_eq!(
        std::fs::read(a.join("report.csv")).unwrap(),
        std::fs::read(b.join("report.csv")).unwrap()
    );
}

#[test]
fn replay_detects_changed_input() {
    let dir = TempDir::new().unwrap();
    let spec = symmetric_spec(&dir);
    let out = dir.path().join("out");
    assert!(
        carshare(&["gen-trace", s(&spec), "--horizon", "20", "--seed", "1"], &out)
            .status
            .success()
    );
    let replayed = dir.path().join("replayed");
    let r = carshare(&["replay", s(&out.join("manifest.json"))], &replayed);
    assert!(r.status.success());
    assert_eq!(
        std::fs::read(out.join("trace.csv")).unwrap(),
        std::fs::read(replayed.join("trace.csv")).unwrap()
    );

    std::fs::write(&spec, std::fs::read_to_string(&spec).unwrap().replace("6", "7")).unwrap();
    let r = carshare(&["replay", s(&out.join("manifest.json"))], &dir.path().join("again"));
    assert_eq!(r.status.code(), Some(2));
}
