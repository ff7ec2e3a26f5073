//! Exit-code and artifact-plumbing checks for the binary.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adiafact"))
}

#[test]
fn compile_writes_artifact_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["--out-dir", tmp.path().to_str().unwrap(), "compile", "--n", "35"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(tmp.path().join("artifact.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["simplified_equations"], serde_json::json!(["p + q = 1"]));
    // Nothing outside the output directory.
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 1);
}

#[test]
fn infeasible_widths_exit_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["--out-dir", tmp.path().to_str().unwrap()])
        .args(["compile", "--n", "15", "--wx", "3", "--wy", "3"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn qubit_budget_exit_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("cfg.toml");
    std::fs::write(&config, "qubit_budget = 0\n").unwrap();
    let status = bin()
        .args(["--config", config.to_str().unwrap()])
        .args(["--out-dir", tmp.path().to_str().unwrap()])
        .args(["compile", "--n", "35"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn bad_config_exit_code_1() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("cfg.toml");
    std::fs::write(&config, "this is not toml ][").unwrap();
    let status = bin()
        .args(["--config", config.to_str().unwrap()])
        .args(["--out-dir", tmp.path().to_str().unwrap(), "gap"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn env_var_sets_default_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let status = bin()
        .env("ADIAFACT_OUT_DIR", tmp.path())
        .args(["nv", "--levels"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let levels = std::fs::read_to_string(tmp.path().join("levels.csv")).unwrap();
    assert!(levels.starts_with("m_s,m_i,energy_mhz\n"));
    assert_eq!(levels.lines().count(), 10);
    assert!(!tmp.path().join("controls.csv").exists());
}

#[test]
fn evolve_scan_produces_monotone_column() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("cfg.toml");
    std::fs::write(&config, "t_total = 60.0\n").unwrap();
    let status = bin()
        .args(["--config", config.to_str().unwrap()])
        .args(["--out-dir", tmp.path().to_str().unwrap()])
        .args(["evolve", "--scan-t", "5,10,20,40,80"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let scan = std::fs::read_to_string(tmp.path().join("fidelity_scan.csv")).unwrap();
    let fids: Vec<f64> = scan
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(fids.len(), 5);
    for w in fids.windows(2) {
        assert!(w[1] >= w[0] - 1e-3, "fidelity scan not monotone: {fids:?}");
    }
    assert!(tmp.path().join("trajectory.csv").exists());
}

#[test]
fn tomo_exact_reconstructs_final_state() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("cfg.toml");
    std::fs::write(&config, "t_total = 120.0\n").unwrap();
    let status = bin()
        .args(["--config", config.to_str().unwrap()])
        .args(["--out-dir", tmp.path().to_str().unwrap()])
        .args(["tomo", "--exact"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let rho: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("rho.json")).unwrap())
            .unwrap();
    assert!(rho["fidelity"].as_f64().unwrap() > 0.99);
    let records = std::fs::read_to_string(tmp.path().join("tomo_records.csv")).unwrap();
    assert_eq!(records.lines().count(), 17);
}

fn float_fields_have_12_sig_digits(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    for line in text.lines().skip(1) {
        for field in line.split(',') {
            if field.contains('e') {
                let mantissa = field.split('e').next().unwrap();
                let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
                assert_eq!(digits, 12, "field {field} in {}", path.display());
            }
        }
    }
}

#[test]
fn csv_floats_carry_12_significant_digits() {
    let tmp = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["--out-dir", tmp.path().to_str().unwrap(), "gap"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    float_fields_have_12_sig_digits(&tmp.path().join("spectrum.csv"));
}
