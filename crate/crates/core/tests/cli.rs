use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use g2deform::cli::{self, default_fd_step, RunSpec};

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_g2deform"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn verify_identities_writes_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(dir.path(), &["verify-identities", "--out", "report.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["command"], "verify-identities");
    assert_eq!(r["passed"], true);
    assert_eq!(r["metadata"]["seed"], 0);
    let checks = r["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    for c in checks {
        assert!(c["name"].is_string() && c["value"].is_number() && c["tolerance"].is_number());
        assert_eq!(c["passed"], true);
    }
}

#[test]
fn warped_demo_writes_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(dir.path(), &["warped-demo", "--case", "2", "--out", "report.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "t,h,theta,tau1,tau7_norm,f,V,residuals");
    assert!(csv.lines().count() > 10);
    assert_eq!(report(dir.path())["trajectory"], "report.csv");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = bin(dir.path(), &["torsion", "--seed", "7", "--out", "report.json"]);
        assert_eq!(out.status.code(), Some(0));
        fs::read(dir.path().join("report.json")).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(bin(dir.path(), &["torsion", "--tol", "-1"]).status.code(), Some(2));
    assert_eq!(bin(dir.path(), &["torsion", "--field", "missing.json"]).status.code(), Some(2));
    assert_eq!(bin(dir.path(), &["warped-demo", "--case", "4"]).status.code(), Some(2));

    fs::write(dir.path().join("bad.json"), r#"{"deform":{"kind":"conformal","f":"nope"}}"#).unwrap();
    assert_eq!(bin(dir.path(), &["deform", "--field", "bad.json"]).status.code(), Some(2));
    // The deform suite needs a deformation to check.
    assert_eq!(bin(dir.path(), &["deform"]).status.code(), Some(2));
}

#[test]
fn coarse_step_on_case_three_fails_honestly() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(dir.path(), &["theorem-check", "--case", "3", "--fd-step", "1e-4", "--out", "report.json"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(dir.path());
    assert_eq!(r["passed"], false);
    assert!(r["checks"].as_array().unwrap().iter().any(|c| c["passed"] == false));
}

#[test]
fn conformal_deform_suite_passes_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("field.json");
    fs::write(&field, r#"{"deform":{"kind":"conformal","f":"exp_linear"}}"#).unwrap();
    let mut spec = RunSpec::new(cli::Command::Deform);
    spec.field = Some(field);
    let r = cli::execute(&spec).unwrap();
    assert!(r.passed, "{:?}", r.checks);
    assert!(r.checks.iter().any(|c| c.name.contains("torsion_law")));
}

#[test]
fn fd_step_defaults() {
    assert_eq!(default_fd_step(cli::Command::TheoremCheck, Some(3)), 2e-5);
    assert_eq!(default_fd_step(cli::Command::TheoremCheck, Some(1)), 1e-4);
    assert_eq!(default_fd_step(cli::Command::Torsion, None), 1e-4);
}
