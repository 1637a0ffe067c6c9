use std::path::Path;
use std::process::{Command, Output};

fn meanfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meanfield")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{
  "grid": {{ "points": 8, "length": 8.0 }},
  "potential": {{ "kind": "gaussian", "amplitude": 1.0, "width": 1.0 }},
  "initial": {{ "kind": "gaussian", "width": 1.0 }},
  "particles": [2, 3, 4],
  "t_end": 0.1,
  "dt": 0.01,
  "sample_stride": 5,
  "output": "{}"
}}"#,
        dir.join("out").display()
    );
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn csv_header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn laguerre_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = meanfield(&["laguerre", "--particles", "6", "--out", out, "--quiet"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let table = std::fs::read_to_string(dir.path().join("laguerre.csv")).unwrap();
    assert!(table.starts_with("m,a_m,"));
    assert_eq!(table.lines().count(), 1 + 6);
}

#[test]
fn hartree_and_bogoliubov_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let run = meanfield(&["--config", &config, "hartree"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert!((summary["final_norm"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(csv_header(&dir.path().join("out/hartree.csv")), "t,x,re,im,density");

    let run = meanfield(&["--config", &config, "--quiet", "bogoliubov"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(csv_header(&dir.path().join("out/bogoliubov.csv")).starts_with("N,t,e2_norm"));
}

#[test]
fn rate_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let run = meanfield(&["--config", &config, "rate"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("rate fit"));
    assert!(csv_header(&dir.path().join("out/convergence.csv")).starts_with("N,t,trace_err"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{ "grid": { "points": 8, "length": 8.0 }, "timestep": 0.1 }"#).unwrap();
    let run = meanfield(&["--config", path.to_str().unwrap(), "hartree"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("timestep"));
}

#[test]
fn oversized_nbody_grid_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let run = meanfield(&["--config", &config, "nbody", "--particles", "40"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("N = 40"));
}

#[test]
fn bad_arguments_are_usage_errors() {
    let run = meanfield(&["laguerre", "--particles", "many"]);
    assert_eq!(run.status.code(), Some(2));
}
