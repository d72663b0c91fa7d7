use gaussbsde_cli::RunSummary;
use gaussbsde_core::theorem_lab::TheoremReport;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

/// Runs the binary from `cwd`; relative output directories resolve there.
fn gaussbsde_in(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaussbsde"))
        .current_dir(cwd)
        .args(args)
        .env("GAUSSBSDE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("experiment.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const IDENTITY: &str = r#"
kind = "solve"
seed = 11
output_dir = "out"

[driver]
kind = "fbm"
hurst = HURST
T = 1.0

[solver]
n_time = 16
n_particles = 2000

[experiment]
scenario = "identity"
"#;

#[test]
fn invalid_hurst_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &IDENTITY.replace("HURST", "1.5"));
    let out = gaussbsde_in(dir.path(), &["run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("hurst must be in (0,1)"), "{stderr}");
    assert!(!dir.path().join("out/manifest.json").exists());

    let out = gaussbsde_in(dir.path(), &["validate", &cfg]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn identity_solve_writes_exact_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &IDENTITY.replace("HURST", "0.3"));
    assert_eq!(gaussbsde_in(dir.path(), &["validate", &cfg]).status.code(), Some(0));

    let out = gaussbsde_in(dir.path(), &["run", &cfg, "--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("out");
    assert!(root.join("manifest.json").exists());
    assert!(root.join("measurements.csv").exists());

    let report = fs::read_dir(root.join("reports")).unwrap().next().unwrap().unwrap().path();
    let report: TheoremReport = serde_json::from_slice(&fs::read(report).unwrap()).unwrap();
    assert_eq!(report.pass, Some(true));
    for label in ["0", "mid", "T"] {
        let u0 = report.get(&format!("u[t={label}][0]")).unwrap();
        let u1 = report.get(&format!("u[t={label}][1]")).unwrap();
        assert!(u0.abs() < 1e-6 && (u1 - 1.0).abs() < 1e-6, "t={label}: {u0} {u1}");
    }
}

#[test]
fn seed_and_output_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &IDENTITY.replace("HURST", "0.5"));
    let other = dir.path().join("elsewhere");
    let out = gaussbsde_in(dir.path(), &["run", &cfg, "--quiet", "--seed", "99", "--out", other.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let manifest = fs::read_to_string(other.join("manifest.json")).unwrap();
    assert!(manifest.contains("99"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn failed_check_maps_to_exit_code_two() {
    let report = TheoremReport {
        theorem: "comparison".into(),
        scenario_digest: String::new(),
        pass: Some(false),
        measurements: Vec::new(),
        tolerances: Vec::new(),
        seed: 0,
        notes: Vec::new(),
    };
    let outcome = |pass| gaussbsde_cli::Outcome {
        name: "x".into(),
        report: TheoremReport { pass, ..report.clone() },
        series: None,
        runtime_ms: 0,
    };
    let summary = |outcomes| RunSummary {
        out_dir: Default::default(),
        manifest: Default::default(),
        outcomes,
    };
    assert_eq!(summary(vec![outcome(Some(true)), outcome(None)]).exit_code(), 0);
    assert_eq!(summary(vec![outcome(Some(true)), outcome(Some(false))]).exit_code(), 2);
}
