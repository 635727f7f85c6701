use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn grf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grf-swarm"))
        .args(args)
        .env_remove("GRF_SWARM_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn short_run(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--scenario",
        "preset:desk-segregation",
        "--set",
        "max_ticks=200",
        "--seed",
        "4",
        "--out-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    grf(&args)
}

#[test]
fn repeated_runs_write_identical_metric_streams() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&short_run(&a, &[]));
    ok(&short_run(&b, &[]));
    let ma = fs::read(a.join("metrics.jsonl")).unwrap();
    assert!(!ma.is_empty());
    assert_eq!(ma, fs::read(b.join("metrics.jsonl")).unwrap());
    let record: serde_json::Value = serde_json::from_slice(&fs::read(a.join("record.json")).unwrap()).unwrap();
    assert_eq!(record["seed"], 4);
    assert_eq!(record["controller"], "grf");
    assert_eq!(record["config"]["sampler"]["iterations"], 100);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempdir().unwrap();
    let run = |workers: &str, sub: &str| {
        let out = dir.path().join(sub);
        ok(&grf(&[
            "--workers",
            workers,
            "run",
            "--scenario",
            "preset:full-segregation",
            "--set",
            "max_ticks=40",
            "--stride",
            "1",
            "--out-dir",
            out.to_str().unwrap(),
        ]));
        fs::read(out.join("metrics.jsonl")).unwrap()
    };
    assert_eq!(run("1", "one"), run("3", "three"));
}

#[test]
fn gd_runs_are_tagged() {
    let dir = tempdir().unwrap();
    let stdout = ok(&short_run(dir.path(), &["--controller", "gd"]));
    assert!(stdout.contains("controller=gd"), "{stdout}");
    let record: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("record.json")).unwrap()).unwrap();
    assert_eq!(record["controller"], "gd");
}

#[test]
fn state_dump_has_one_line_per_robot_and_tick() {
    let dir = tempdir().unwrap();
    ok(&grf(&[
        "run",
        "--scenario",
        "preset:desk-flocking",
        "--set",
        "max_ticks=3",
        "--dump-states",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]));
    let text = fs::read_to_string(dir.path().join("states.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 10 * 4);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["tick", "id", "x", "y", "vx", "vy", "type"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn missing_scenario_fails_without_output() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("never");
    let res = grf(&["run", "--scenario", "/definitely/not/here.toml", "--out-dir", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&res.stderr).contains("here.toml"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempdir().unwrap();
    let res = short_run(dir.path(), &["--set", "potential.alpha=3.0"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("potential.alpha"));
    let res = short_run(dir.path(), &["--set", "novalue"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn scenario_files_are_read() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("s.toml");
    fs::write(&path, "group_sizes = [2, 2]\nmax_ticks = 20\nseed = 3\n[arena]\nwidth = 2.0\nheight = 2.0\n").unwrap();
    let out = dir.path().join("out");
    ok(&grf(&["run", "--scenario", path.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]));
    let record: serde_json::Value = serde_json::from_slice(&fs::read(out.join("record.json")).unwrap()).unwrap();
    assert_eq!(record["config"]["group_sizes"], serde_json::json!([2, 2]));
    assert_eq!(record["seed"], 3);
}

#[test]
fn validate_reports_potential_shape() {
    let stdout = ok(&grf(&["validate", "--scenario", "preset:desk-segregation"]));
    assert!(stdout.contains("group_sizes = [5, 5, 5]"), "{stdout}");
    assert!(stdout.contains("strictly decreasing on"), "{stdout}");
    assert!(stdout.contains(": true"), "{stdout}");
    assert!(stdout.contains("# config hash "), "{stdout}");
}

#[test]
fn shape_reports_attractor_distances() {
    let dir = tempdir().unwrap();
    let stdout = ok(&grf(&[
        "shape",
        "--scenario",
        "preset:desk-shape",
        "--set",
        "max_ticks=50",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]));
    assert!(stdout.contains("type 1 mean distance to attractors"), "{stdout}");
    let record: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("record.json")).unwrap()).unwrap();
    assert!(!record["attractor_distances"].as_array().unwrap().is_empty());
}

#[test]
fn shape_without_attractors_matches_run() {
    let dir = tempdir().unwrap();
    let (a, b) = (dir.path().join("run"), dir.path().join("shape"));
    ok(&short_run(&a, &[]));
    let res = grf(&[
        "shape",
        "--scenario",
        "preset:desk-segregation",
        "--set",
        "max_ticks=200",
        "--seed",
        "4",
        "--out-dir",
        b.to_str().unwrap(),
    ]);
    ok(&res);
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
    assert_eq!(
        fs::read(a.join("metrics.jsonl")).unwrap(),
        fs::read(b.join("metrics.jsonl")).unwrap()
    );
}

#[test]
fn batch_writes_run_and_aggregate_tables() {
    let dir = tempdir().unwrap();
    let stdout = ok(&grf(&[
        "batch",
        "--scenario",
        "preset:desk-segregation",
        "--set",
        "max_ticks=30",
        "--seeds",
        "0..3",
        "--controller",
        "grf,gd",
        "--sweep",
        "noise_fraction=0.0,0.1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]));
    assert!(stdout.contains("noise_fraction=0.1"), "{stdout}");
    let mut runs = csv::Reader::from_path(dir.path().join("runs.csv")).unwrap();
    let headers = runs.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "final_cluster_count"));
    assert_eq!(runs.records().count(), 2 * 2 * 3);
    let mut agg = csv::Reader::from_path(dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(agg.records().count(), 2 * 2);
}
