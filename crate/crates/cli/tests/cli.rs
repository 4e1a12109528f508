use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn planenav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_planenav"))
        .args(args)
        .env_remove("PLANENAV_SCENARIO")
        .env_remove("PLANENAV_CLUSTERING_CONFIG")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn scenarios_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Points on a `nu × nv` grid of the rectangle `origin + a·u + b·v`, jittered
/// along `normal` by a deterministic ±`jitter` pattern.
fn grid(origin: [f64; 3], u: [f64; 3], v: [f64; 3], normal: [f64; 3], nu: usize, nv: usize, jitter: f64) -> Vec<[f64; 3]> {
    let mut pts = Vec::new();
    for i in 0..nu {
        for j in 0..nv {
            let a = i as f64 / (nu - 1) as f64;
            let b = j as f64 / (nv - 1) as f64;
            let e = jitter * ((i * 7 + j * 13) as f64).sin();
            pts.push(std::array::from_fn(|k| origin[k] + a * u[k] + b * v[k] + e * normal[k]));
        }
    }
    pts
}

fn write_cloud(path: &Path, pts: &[[f64; 3]]) {
    let mut text = String::from("x,y,z\n");
    for p in pts {
        text.push_str(&format!("{},{},{}\n", p[0], p[1], p[2]));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn hover_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hover");
    let run = planenav(&["run", s(&scenarios_dir().join("hover.toml")), "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    for f in ["trace.csv", "metrics.json", "plot.csv", "planes.json", "timing.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let metrics: Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["collision"], Value::Bool(false));
    assert_eq!(metrics["ticks"], Value::from(101));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 102);
}

#[test]
fn repeated_runs_give_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("short.toml");
    fs::write(
        &scenario,
        "seed = 4\n[environment]\nkind = \"confined_room\"\n[run]\nduration = 2.0\n[noise]\nposition_std = 1.5\n",
    )
    .unwrap();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let run = planenav(&["run", s(&scenario), "--out", s(&out), "--mode", "fixed"]);
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
        bytes.push((fs::read(out.join("metrics.json")).unwrap(), fs::read(out.join("trace.csv")).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn malformed_config_exits_with_config_error_and_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        "[environment\nkind = \"corridor\"\n",
        "[environment]\nkind = \"corridor\"\nunknown_key = 3\n",
        "[environment]\nkind = \"corridor\"\n[nmpc]\nd_s = -1.0\n",
        "[run]\nduration = 5.0\n",
    ];
    for (k, text) in cases.iter().enumerate() {
        let scenario = dir.path().join(format!("bad{k}.toml"));
        fs::write(&scenario, text).unwrap();
        let run = planenav(&["run", s(&scenario), "--out", s(&out)]);
        assert_eq!(code(&run), 2, "case {k}: {}", String::from_utf8_lossy(&run.stderr));
        assert!(!out.exists());
    }
}

#[test]
fn missing_scenario_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = planenav(&["run", s(&dir.path().join("nope.toml")), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&run), 1);
}

#[test]
fn scenario_path_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let run = Command::new(env!("CARGO_BIN_EXE_planenav"))
        .args(["run", "--out", s(&out)])
        .env("PLANENAV_SCENARIO", scenarios_dir().join("hover.toml"))
        .output()
        .unwrap();
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("metrics.json").is_file());
}

#[test]
fn collision_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("wall.toml");
    // A potential-field run aimed straight through a thin panel.
    fs::write(
        &scenario,
        r#"mode = "apf"
[environment]
kind = "custom"
spawn = [0.0, 0.0, 1.5]
panels = [{ min = [2.5, -3.0, 0.0], max = [2.5, 3.0, 3.0] }]

[[waypoints]]
position = [5.0, 0.0, 1.5]
speed = 1.0

[run]
duration = 12.0

[apf]
repulsion = 0.0
"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let run = planenav(&["run", s(&scenario), "--out", s(&out)]);
    assert_eq!(code(&run), 3, "{}", String::from_utf8_lossy(&run.stderr));
    let metrics: Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["collision"], Value::Bool(true));
}

#[test]
fn segment_three_walls() {
    let dir = tempfile::tempdir().unwrap();
    let mut pts = grid([2.0, -1.5, -1.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.5], [1.0, 0.0, 0.0], 18, 19, 0.01);
    pts.extend(grid([-1.5, 2.0, -1.0], [3.0, 0.0, 0.0], [0.0, 0.0, 2.5], [0.0, 1.0, 0.0], 18, 19, 0.01));
    pts.extend(grid([-1.5, -1.5, -1.2], [3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 1.0], 18, 19, 0.01));
    let cloud = dir.path().join("walls.csv");
    write_cloud(&cloud, &pts);
    let config = dir.path().join("seg.toml");
    fs::write(&config, "n_cluster = 3\nrank = 3\nseed = 2\n").unwrap();
    let out = dir.path().join("walls.json");
    let run = planenav(&["segment", s(&cloud), "--config", s(&config), "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));

    let result: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let planes = result["planes"].as_array().unwrap();
    assert_eq!(planes.len(), 3);
    let labels = result["labels"].as_array().unwrap();
    assert_eq!(labels.len(), result["sampled_indices"].as_array().unwrap().len());
    for axis in ["alpha", "beta", "gamma"] {
        assert!(planes.iter().any(|p| p[axis].as_f64().unwrap().abs() > 0.999), "{axis}: {planes:?}");
    }
    let timing: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("walls.json.timing.json")).unwrap()).unwrap();
    assert_eq!(timing["points"], Value::from(pts.len()));
    assert!(timing["seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn segment_single_plane() {
    let dir = tempfile::tempdir().unwrap();
    let pts = grid([3.0, -2.0, -1.0], [0.0, 4.0, 0.0], [0.0, 0.0, 2.0], [1.0, 0.0, 0.0], 25, 20, 0.005);
    let cloud = dir.path().join("wall.csv");
    write_cloud(&cloud, &pts);
    let config = dir.path().join("seg.toml");
    fs::write(&config, "n_cluster = 1\nrank = 1\n").unwrap();
    let out = dir.path().join("wall.json");
    let run = planenav(&["segment", s(&cloud), "--config", s(&config), "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let result: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let planes = result["planes"].as_array().unwrap();
    assert_eq!(planes.len(), 1);
    // x = 3 with either normal orientation.
    let p = &planes[0];
    let sign = p["alpha"].as_f64().unwrap().signum();
    assert!((sign * p["alpha"].as_f64().unwrap() - 1.0).abs() < 1e-3, "{p}");
    assert!((sign * p["zeta"].as_f64().unwrap() + 3.0).abs() < 0.01, "{p}");
}

#[test]
fn segment_empty_cloud_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("empty.csv");
    fs::write(&cloud, "").unwrap();
    let out = dir.path().join("empty.json");
    let run = planenav(&["segment", s(&cloud), "--out", s(&out)]);
    assert_eq!(code(&run), 5, "{}", String::from_utf8_lossy(&run.stderr));
    assert!(!out.exists());
}

#[test]
fn segment_missing_cloud_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = planenav(&["segment", s(&dir.path().join("none.csv")), "--out", s(&dir.path().join("o.json"))]);
    assert_eq!(code(&run), 1);
}
