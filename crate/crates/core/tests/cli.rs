//! End-to-end runs of the `reflect-lab` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reflect-lab")).args(args).output().unwrap()
}

fn run_config(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"];
    args.extend_from_slice(extra);
    run(&args)
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn validate_unit_ball_reports_unit_rho() {
    let out = tempfile::tempdir().unwrap();
    let o = run_config("validate-domain", &configs().join("unit_ball_normal.json"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.path().join("report.json"));
    assert_eq!(report["rho_hat"], 1.0);
    assert_eq!(report["passed"], true);
    let manifest = json(&out.path().join("manifest.json"));
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["outputs"], serde_json::json!(["report.json"]));
    assert!(manifest["config_hash"].as_str().unwrap().starts_with("sha256:"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = run(&["frobnicate", "--config", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Usage"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_config_flag_is_usage_error() {
    let o = run(&["skeleton"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        let o = run(&[flag]);
        assert_eq!(o.status.code(), Some(0));
        assert!(!o.stdout.is_empty());
    }
}

#[test]
fn outward_drift_sweep_is_strictly_decreasing() {
    let out = tempfile::tempdir().unwrap();
    let o = run_config("penalty-sweep", &configs().join("outward_drift.json"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut reader = csv::Reader::from_path(out.path().join("sweep.csv")).unwrap();
    let col = reader.headers().unwrap().iter().position(|h| h == "sup_pen_H").unwrap();
    let sup: Vec<f64> = reader.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    assert_eq!(sup.len(), 11);
    assert!(sup.windows(2).all(|w| w[1] < w[0]), "{sup:?}");
    let raw = std::fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    assert!(!raw.contains('\r'));
}

#[test]
fn malformed_config_reports_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("outward_drift.json")).unwrap().replace("\"J\": 63", "\"J\": \"many\"");
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = run_config("skeleton", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = json(&out.join("error.json"));
    assert_eq!(err["kind"], "config");
    assert_eq!(err["field"], "grid.J");
    assert_eq!(err["line"], 9);
    assert_eq!(json(&out.join("manifest.json"))["status"], "error");
}

#[test]
fn failed_domain_validation_exits_one_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_slice(&std::fs::read(configs().join("unit_ball_normal.json")).unwrap()).unwrap();
    cfg["gamma"] = serde_json::json!({"kind": "rotated_normal", "angle_deg": 80.0});
    cfg["tolerances"]["rho_min"] = 0.2.into();
    let path = dir.path().join("tilted.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = run_config("validate-domain", &path, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let rho = json(&out.join("report.json"))["rho_hat"].as_f64().unwrap();
    assert!((rho - 80f64.to_radians().cos()).abs() < 1e-9, "{rho}");
    assert_eq!(json(&out.join("error.json"))["kind"], "validation");
    assert_eq!(json(&out.join("manifest.json"))["status"], "error");
}

#[test]
fn invalid_semantics_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_slice(&std::fs::read(configs().join("quick_all.json")).unwrap()).unwrap();
    cfg["epsilons"] = serde_json::json!([0.1, 0.5]);
    let path = dir.path().join("eps.json");
    std::fs::write(&path, serde_json::to_vec(&cfg).unwrap()).unwrap();
    let o = run_config("mc", &path, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("quick_all.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run_config("mc", &cfg, &a, &[]).status.code(), Some(0));
    assert_eq!(run_config("mc", &cfg, &b, &["--seed", "99"]).status.code(), Some(0));
    assert_eq!(json(&b.join("manifest.json"))["seeds"]["base_seed"], 99);
    let ra = std::fs::read(a.join("replicas.csv")).unwrap();
    let rb = std::fs::read(b.join("replicas.csv")).unwrap();
    assert_ne!(ra, rb);
}

#[test]
fn all_skips_stages_without_config() {
    let out = tempfile::tempdir().unwrap();
    let o = run_config("all", &configs().join("outward_drift.json"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = json(&out.path().join("manifest.json"));
    let skipped: Vec<&str> = manifest["skipped"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(skipped, ["continuity", "rate", "mc", "ldp-compare"]);
    assert!(out.path().join("skeleton/trajectory/index.json").exists());
    assert!(!out.path().join("rate").exists());
}

#[test]
fn rate_report_holds_minimizer() {
    let out = tempfile::tempdir().unwrap();
    let o = run_config("rate", &configs().join("quick_all.json"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&out.path().join("report.json"));
    assert_eq!(r["control"]["hdot"].as_array().unwrap().len(), 4);
    assert!(r["I_star"].as_f64().unwrap() > 0.0);
    assert!(std::fs::read_to_string(out.path().join("trace.csv")).unwrap().starts_with("mu,iteration,"));
}
