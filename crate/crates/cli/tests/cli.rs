use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn specs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osculate")).args(args).arg("--out").arg(out).output().unwrap()
}

fn spec(name: &str) -> String {
    specs().join(name).display().to_string()
}

fn summary(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn validate_algebra_passes_on_shipped_specs() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["heis.json", "engel.json"] {
        let out = run(&["validate-algebra", &spec(name)], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let s = summary(&out);
        assert_eq!(s["command"], "validate-algebra");
        assert_eq!(s["metrics"]["associativity_failures"], 0);
    }
}

#[test]
fn misfiltered_patch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["check-filtration", &spec("heis_bad_patch.json")], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("check-filtration.json"));
    assert!(!summary(&out)["metrics"]["violation"].is_null());
    assert_eq!(run(&["check-filtration", &spec("heis_patch.json")], dir.path()).status.code(), Some(0));
}

#[test]
fn parse_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"dim\": 2,").unwrap();
    let out = run(&["validate-algebra", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    let out = run(&["demo-log-kernel", "--grid-eta", "100"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn outputs_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["validate-algebra", &spec("engel.json"), "--seed", "7"];
    let (x, y) = (run(&args, a.path()), run(&args, b.path()));
    assert_eq!((x.status.code(), y.status.code()), (Some(0), Some(0)));
    let read = |d: &Path| std::fs::read_to_string(d.join("validate-algebra.json")).unwrap();
    let strip = |s: String, d: &Path| s.replace(&d.display().to_string(), "OUT");
    assert_eq!(strip(read(a.path()), a.path()), strip(read(b.path()), b.path()));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"grid_eta": 64, "tol": 1e-3}"#).unwrap();
    let out = run(&["demo-log-kernel", "--config", cfg.to_str().unwrap(), "--grid-eta", "128"], dir.path());
    let s = summary(&out);
    assert_eq!(s["config"]["grid_eta"], 128);
    assert_eq!(s["config"]["tol"], 1e-3);
}

#[test]
fn log_kernel_zoom_test_reports_cocycle() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["zoom-test", &spec("log_kernel.json")], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    let c = &s["metrics"]["kernel_cocycle"][0];
    assert_eq!(c["lambda"], 2.0);
    let want = -0.5 * 2f64.ln() * std::f64::consts::TAU;
    let got = c["zero_mode"].as_f64().unwrap();
    assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
    assert!(dir.path().join("zoom-test_decay.csv").exists());
}

#[test]
fn cosymbol_and_compose() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["cosymbol", &spec("heis_sublaplacian.json")], dir.path());
    assert_eq!(summary(&out)["metrics"]["h_order"], 2);
    let out = run(&["compose", &spec("heis_x.json"), &spec("heis_y.json")], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary(&out)["metrics"]["morphism_holds"], true);
}

#[test]
fn parametrix_on_potential_operator() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["parametrix", &spec("lap_potential.json"), "--k", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    for side in ["right_residual", "left_residual"] {
        assert!(s["metrics"][side]["slope"].as_f64().unwrap() <= -3.8);
    }
    assert!(dir.path().join("parametrix_right_residual.csv").exists());
}

#[test]
fn expansion_of_root_family() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["expand", &spec("root.json"), "--k", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(summary(&out)["metrics"]["report"]["terms"].as_array().unwrap().len(), 3);
}

#[test]
fn heisenberg_demo_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["demo-heisenberg", "--n", "4"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("heisenberg_gamma.bin").exists());
}
