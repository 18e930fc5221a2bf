use std::path::Path;
use std::process::{Command, Output};

fn qdrive(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdrive"))
        .args(args)
        .env_remove("QDRIVE_WORKERS")
        .output()
        .unwrap()
}

fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect()
}

#[test]
fn unknown_flag_prints_usage_and_fails() {
    let out = qdrive(&["simulate", "--no-such-flag"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn simulate_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let out = qdrive(&[
        "simulate", "--kind", "superadiabatic_tangent", "--omega", "0.5", "--T", "5.9", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# {"));
    let lines = data_lines(&path);
    assert!(lines[0].starts_with("tau,t,gamma,omega,omega_y,fidelity"));
    assert_eq!(lines.len(), 1 + 4097);
}

#[test]
fn sweep_time_to_fidelity_is_one_row() {
    let out = qdrive(&["sweep", "--kind", "roland_cerf", "--omega", "0.5", "--target-fidelity", "0.9"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].contains("roland_cerf") && rows[1].contains("time_to_fidelity"));
}

#[test]
fn sweep_accepts_negative_deviations() {
    let out = qdrive(&[
        "sweep", "--kind", "superadiabatic_tangent", "--omega", "0.5", "--T", "5.9", "--deviation", "-0.5,0,0.5",
        "--axis", "duration", "--steps", "512",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn non_convergence_exits_nonzero_with_diagnostic() {
    let out = qdrive(&[
        "simulate", "--kind", "lz_linear", "--omega", "0.5", "--T", "40", "--steps", "16", "--sample-rule",
        "midpoint", "--convergence-check",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not converged"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "kind = lz_linear\nomega = 0.5\nT = 8\nsteps = 256\n").unwrap();
    let a = dir.path().join("a.csv");
    let out = qdrive(&["simulate", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(data_lines(&a).len(), 1 + 257);
    let b = dir.path().join("b.csv");
    let out = qdrive(&["simulate", "--config", cfg.to_str().unwrap(), "--steps", "128", "--out", b.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(data_lines(&b).len(), 1 + 129);

    std::fs::write(&cfg, "colour = blue\n").unwrap();
    let out = qdrive(&["selftest", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn bad_worker_environment_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_qdrive"))
        .args(["sweep", "--kind", "lz_linear", "--omega", "0.5", "--T", "2"])
        .env("QDRIVE_WORKERS", "lots")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("QDRIVE_WORKERS"));
}

#[test]
fn export_lattice_writes_waveform_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wave.csv");
    let out = qdrive(&[
        "export-lattice", "--kind", "superadiabatic_tangent", "--omega", "0.5", "--T", "5.9", "--samples", "1001",
        "--slew-seconds", "2e-6", "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = data_lines(&path);
    assert_eq!(lines[0], "t_seconds,V0_recoils,q,q_prime,beta");
    assert_eq!(lines.len(), 1002);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap()).unwrap();
    assert_eq!(meta["impulse_segments"].as_array().unwrap().len(), 2);
    assert_eq!(meta["impulse_segments"][0]["slew_seconds"], 2e-6);
    assert_eq!(meta["protocol"]["kind"], "superadiabatic_tangent");

    let out = qdrive(&[
        "export-lattice", "--kind", "lz_linear", "--omega", "0.5", "--T", "5", "--realization", "explicit", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn figures_writes_six_reproducible_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = qdrive(&["figures", "--out-dir", dir.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["fig2d", "fig2e", "fig3c", "fig3d", "fig4a", "fig4b"] {
        let file = format!("{name}.csv");
        let x = std::fs::read(a.path().join(&file)).unwrap();
        let y = std::fs::read(b.path().join(&file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn selftest_passes() {
    let out = qdrive(&["selftest"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("9 of 9 checks passed"));
}
