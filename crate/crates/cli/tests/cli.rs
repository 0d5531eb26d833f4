use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use microgrid_core::config::RunConfig;

const TINY: &str = r#"{
  "name": "tiny",
  "system": {"horizon_steps": 8, "delta": 0.25, "theta_o": {"constant": 8.0}},
  "sddp": {"S_offline": 3, "S_online": 3, "max_iters": 10},
  "assessment": {"n_opt": 10, "n_sim": 10}
}"#;

fn tiny(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    fs::write(&path, TINY).unwrap();
    path
}

fn microgrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_microgrid")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bench_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let out = dir.path().join("out");
    let start = Instant::now();
    let o = microgrid(&["bench", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed() < Duration::from_secs(30));
    for f in ["scenarios.csv", "cuts.json", "training_log.csv", "report.json", "costs.csv", "gaps.csv", "gap_histogram.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let names: Vec<&str> = report["policies"].as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["sddp", "mpc", "heuristic"]);
    assert_eq!(report["n_scenarios"], 10);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "bench");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("sddp") && stdout.contains("heuristic"));
}

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let gen = dir.path().join("gen");
    let o = microgrid(&["generate", "--config", s(&cfg), "--out", s(&gen)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let scen = gen.join("scenarios.csv");
    let mut cuts = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = microgrid(&["train", "--config", s(&cfg), "--scenarios", s(&scen), "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        cuts.push(fs::read(out.join("cuts.json")).unwrap());
    }
    assert_eq!(cuts[0], cuts[1]);

    let report = dir.path().join("report");
    let o = microgrid(&[
        "assess",
        "--config",
        s(&cfg),
        "--scenarios",
        s(&scen),
        "--cuts",
        s(&dir.path().join("a/cuts.json")),
        "--report-out",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(report.join("report.json").exists());
}

#[test]
fn missing_input_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let missing = dir.path().join("nowhere.csv");
    let o = microgrid(&["train", "--config", s(&cfg), "--scenarios", s(&missing), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.csv"));
    let o = microgrid(&["bench", "--config", s(&dir.path().join("absent.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"sddp": {"max_iters": 0}}"#).unwrap();
    let o = microgrid(&["bench", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sddp.max_iters"));
}

#[test]
fn config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&tiny(dir.path())).unwrap();
    let again = RunConfig::from_json(&cfg.to_json(), dir.path()).unwrap();
    assert_eq!(cfg.to_json(), again.to_json());
    for name in ["winter", "spring", "summer"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/{name}.json"));
        let c = RunConfig::load(&path).unwrap();
        c.validate().unwrap();
        assert_eq!(c.params().unwrap().horizon_steps, 96);
    }
}
