use std::path::Path;
use std::process::Command;

use cachelab::cli::run;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_cachelab");

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn one_line_cache(dir: &Path) -> String {
    write(
        dir,
        "one.toml",
        "[[level]]\ncapacity = 64\nblock = 64\nlatency = 10\n",
    )
}

fn run_args(args: &[&str], env_seed: Option<&str>) -> (i32, String) {
    let mut err = Vec::new();
    let mut full = vec!["cachelab"];
    full.extend_from_slice(args);
    let code = run(full, env_seed, &mut err);
    (code, String::from_utf8(err).unwrap())
}

fn json_report(path: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn trace_on_one_line_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = one_line_cache(dir.path());
    let trace = write(dir.path(), "t.txt", "R 0\nR 64\nR 0\n");
    let out = dir.path().join("r.json").display().to_string();
    let (code, _) = run_args(
        &[
            "--config",
            &cfg,
            "--format",
            "json",
            "--out",
            &out,
            "simulate-trace",
            &trace,
        ],
        None,
    );
    assert_eq!(code, 0);
    let v = json_report(&out);
    let l1 = &v["rows"][0];
    assert_eq!(l1["case"], "level-1");
    // 64 maps onto the only line, so the second R 0 misses again
    assert_eq!(l1["misses"], 3);
    assert_eq!(l1["hits"], 0);
    assert_eq!(l1["compulsory"], 2);
    assert_eq!(l1["capacity"], 1);
    assert_eq!(l1["conflict"], 0);
    let total = &v["rows"][1];
    assert_eq!(total["case"], "total");
    assert_eq!(total["references"], 3);
}

#[test]
fn empty_trace_gives_zero_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = one_line_cache(dir.path());
    let trace = write(dir.path(), "t.txt", "# nothing\n\n");
    let out = dir.path().join("r.json").display().to_string();
    let (code, _) = run_args(
        &[
            "--config",
            &cfg,
            "--format",
            "json",
            "--out",
            &out,
            "simulate-trace",
            &trace,
        ],
        None,
    );
    assert_eq!(code, 0);
    let v = json_report(&out);
    assert_eq!(v["rows"][0]["accesses"], 0);
    assert_eq!(v["rows"][0]["misses"], 0);
    assert_eq!(v["rows"][1]["cost"], 0);
}

#[test]
fn malformed_trace_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = one_line_cache(dir.path());
    let trace = write(dir.path(), "t.txt", "Q 5\n");
    let (code, err) = run_args(&["--config", &cfg, "simulate-trace", &trace], None);
    assert_eq!(code, 2);
    assert!(err.contains("line 1"), "{err}");
}

#[test]
fn trace_without_levels_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let trace = write(dir.path(), "t.txt", "R 0\n");
    let (code, err) = run_args(&["simulate-trace", &trace], None);
    assert_eq!(code, 2);
    assert!(err.contains("[[level]]"), "{err}");
}

#[test]
fn unknown_experiment_exits_2() {
    let (code, err) = run_args(&["run-experiment", "no-such-thing"], None);
    assert_eq!(code, 2);
    assert!(err.contains("no-such-thing"), "{err}");
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[params]\nbogus = 3\n");
    let (code, _) = run_args(&["--config", &cfg, "run-experiment", "occupancy"], None);
    assert_eq!(code, 2);
    let cfg = write(
        dir.path(),
        "c2.toml",
        "[[level]]\ncapacity = 100\nblock = 8\nlatency = 1\n",
    );
    let (code, err) = run_args(&["--config", &cfg, "run-experiment", "occupancy"], None);
    assert_eq!(code, 2);
    assert!(err.contains("level 1"), "{err}");
}

#[test]
fn occupancy_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("occ.csv").display().to_string();
    let (code, err) = run_args(
        &[
            "--trials",
            "2000",
            "--out",
            &out,
            "run-experiment",
            "occupancy",
        ],
        None,
    );
    assert!(code == 0 || code == 1, "{err}");
    assert!(err
        .lines()
        .all(|l| l.starts_with("PASS") || l.starts_with("FAIL")));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("case,seed,"), "{header}");
    assert_eq!(lines.count(), 9);
}

#[test]
fn output_is_byte_identical_across_runs() {
    let args = [
        "--seed",
        "11",
        "--trials",
        "500",
        "--format",
        "json",
        "run-experiment",
        "conflict-bound",
    ];
    let a = Command::new(BIN).args(args).output().unwrap();
    let b = Command::new(BIN).args(args).output().unwrap();
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v.get("wall_clock_s").is_none());
}

#[test]
fn timing_flag_adds_wall_clock() {
    let out = Command::new(BIN)
        .args(["--trials", "200", "--format", "json", "--timing"])
        .args(["run-experiment", "occupancy"])
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["wall_clock_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn seed_comes_from_environment() {
    let run_with = |env: Option<&str>, flag: Option<&str>| {
        let mut c = Command::new(BIN);
        c.env_remove("CACHELAB_SEED");
        if let Some(s) = env {
            c.env("CACHELAB_SEED", s);
        }
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        let out = c
            .args([
                "--trials",
                "100",
                "--format",
                "json",
                "run-experiment",
                "occupancy",
            ])
            .output()
            .unwrap();
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        v["rows"][0]["seed"].as_u64().unwrap()
    };
    assert_eq!(run_with(None, None), 1);
    assert_eq!(run_with(Some("42"), None), 42);
    assert_eq!(run_with(Some("42"), Some("5")), 5);
    let bad = Command::new(BIN)
        .env("CACHELAB_SEED", "abc")
        .args(["run-experiment", "occupancy"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn exit_code_reflects_checks() {
    // the funnel suite passes on a small configuration
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "f.toml",
        "trials = 2\n[params]\nsizes = [4096, 8192]\nmemory = 1024\nblock = 16\n",
    );
    let (code, err) = run_args(
        &["--config", &cfg, "run-experiment", "funnel-scaling"],
        None,
    );
    assert!(err.contains("all outputs sorted"), "{err}");
    let failed = err.lines().any(|l| l.starts_with("FAIL"));
    assert_eq!(code, if failed { 1 } else { 0 });
}
