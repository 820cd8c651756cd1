mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::config_path;
use orchsim::scenario::strip_wall_clock;
use serde_json::Value;

fn orchsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orchsim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn default_json() -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(config_path("default.json")).unwrap()).unwrap();
    for key in ["topology", "registry"] {
        let rel = v[key].as_str().unwrap().to_owned();
        v[key] = Value::from(config_path(&rel).to_str().unwrap());
    }
    v
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let default = config_path("default.json");
    let o = orchsim(&["validate", "--config", s(&default)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("ok"));

    let mut v = default_json();
    v["d_start"] = 500.0.into();
    v["d_stop"] = 400.0.into();
    let o = orchsim(&["validate", "--config", s(&write_config(dir.path(), "band.json", &v))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("d_stop must exceed d_start"), "{}", stdout(&o));

    let mut v = default_json();
    v["M"] = 3.into();
    v["N"] = 2.into();
    v["routes"] = Value::Array(vec![]);
    let o = orchsim(&["validate", "--config", s(&write_config(dir.path(), "mn.json", &v))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("M ≤ N violated"), "{}", stdout(&o));

    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{ not json").unwrap();
    let o = orchsim(&["validate", "--config", s(&garbage)]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn argument_errors_are_invalid_input() {
    assert_eq!(orchsim(&["run"]).status.code(), Some(2));
    assert_eq!(orchsim(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(orchsim(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let o = orchsim(&["run", "--config", s(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));

    // An output directory that cannot be created is a runtime failure.
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let o = orchsim(&[
        "run",
        "--config",
        s(&config_path("default.json")),
        "--out-dir",
        s(&blocker.join("sub")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

fn run_default(out: &Path, seed: &str) -> Value {
    let report = out.join("report.json");
    let o = orchsim(&[
        "--log-level",
        "error",
        "run",
        "--config",
        s(&config_path("default.json")),
        "--out-dir",
        s(out),
        "--report",
        s(&report),
        "--seed",
        seed,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap()
}

#[test]
fn run_report_schema_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ra = run_default(&a, "7");

    for key in ["episodes", "decisions", "store_stats"] {
        assert!(ra[key].is_array(), "{key}");
    }
    for key in ["detection_ms", "translation_ms", "reconciliation_s", "storage_s"] {
        assert!(ra["latency"][key].is_number(), "latency.{key}");
    }
    assert_eq!(ra["episodes"].as_array().unwrap().len(), 1);
    let rec = ra["latency"]["reconciliation_s"].as_f64().unwrap();
    assert!((5.0..=5.75).contains(&rec), "{rec}");
    assert_eq!(ra["run"]["seed"], 7);

    let rb = run_default(&b, "7");
    let (mut da, mut db) = (ra.clone(), rb);
    strip_wall_clock(&mut da);
    strip_wall_clock(&mut db);
    assert_eq!(da, db);

    let episode = &ra["episodes"][0];
    let store = a.join(episode["store"].as_str().unwrap());
    let entries = episode["store_entries"].as_u64().unwrap();
    let poses: u64 = episode["pose_entries"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    let clouds: u64 = episode["cloud_entries"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(entries, poses + clouds);

    let o = orchsim(&["inspect", s(&store), "--pattern", "#"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.ends_with(&format!("total: {entries}\n")), "{}", &out[out.len().saturating_sub(200)..]);

    let o = orchsim(&["inspect", s(&store), "--pattern", "/cloud/vehicle/0/pose"]);
    assert!(stdout(&o).ends_with(&format!("total: {}\n", episode["pose_entries"]["0"])));

    let o = orchsim(&["inspect", s(&store), "--from", "0", "--to", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).ends_with("total: 0\n"));

    let o = orchsim(&["inspect", s(&store), "--pattern", "/cloud/#/pose"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());

    let o = orchsim(&["inspect", s(&store), "--from", "9", "--to", "1"]);
    assert_eq!(o.status.code(), Some(2));

    let o = orchsim(&["inspect", s(&dir.path().join("nope.ndjson"))]);
    assert_eq!(o.status.code(), Some(1));
}
