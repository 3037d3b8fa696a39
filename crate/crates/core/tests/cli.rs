use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use prepsy::cli::{parse_experiment, parse_experiment_str, run_experiment, verify, RunManifest};

fn experiments() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments")
}

/// The bundled toy experiment on a smaller grid.
fn small_fig3(c_x: f64) -> String {
    fs::read_to_string(experiments().join("fig3.experiment"))
        .unwrap()
        .replace("count = 128", "count = 32")
        .replace("c = [-0.8, 0.0, 0.0]", &format!("c = [{c_x}, 0.0, 0.0]"))
}

fn prepsy() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prepsy"))
}

#[test]
fn bundled_experiments_parse() {
    for name in ["fig3", "fig3_null", "fig4_sweep", "fig7"] {
        let e = parse_experiment(&experiments().join(format!("{name}.experiment"))).unwrap();
        let echo = e.to_toml();
        assert!(echo.contains("[model]") && echo.contains("[protocol]"), "{name}");
    }
    let fig7 = parse_experiment(&experiments().join("fig7.experiment")).unwrap().to_toml();
    assert!(fig7.contains("nv-collective") && fig7.contains("n_spins = 6") && fig7.contains("xi = 0.001"));
}

#[test]
fn run_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let exp = parse_experiment_str(&small_fig3(-0.8), &experiments().join("fig3.experiment")).unwrap();
    let m = run_experiment(&exp, dir.path()).unwrap();
    assert!(!m.null_result);
    assert_eq!(m.differences.len(), 1);
    assert!(m.differences[0].peak_count >= 1);
    let cal = m.calibration.as_ref().unwrap();
    assert!((cal.measured - 0.8).abs() < 0.016);

    // Every listed file exists and nothing unlisted was written.
    let mut on_disk: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut listed = m.files.clone();
    listed.sort();
    assert_eq!(on_disk, listed);

    assert!(verify(dir.path()).unwrap().passed());
    assert_eq!(RunManifest::read(dir.path()).unwrap(), m);
}

#[test]
fn null_run_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let exp = parse_experiment_str(&small_fig3(0.0), Path::new("null.experiment")).unwrap();
    let m = run_experiment(&exp, dir.path()).unwrap();
    assert!(m.null_result);
    assert!(m.notes.iter().any(|n| n.contains("null result: no initial correlation detected")));
    assert_eq!(m.differences[0].peak_count, 0);
    assert!(verify(dir.path()).unwrap().passed());
}

#[test]
fn outputs_are_deterministic() {
    let exp = parse_experiment_str(&small_fig3(-0.5), Path::new("det.experiment")).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let m = run_experiment(&exp, a.path()).unwrap();
    run_experiment(&exp, b.path()).unwrap();
    for f in m.files.iter().filter(|f| f.ends_with(".csv")) {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn verify_catches_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let exp = parse_experiment_str(&small_fig3(-0.8), &experiments().join("fig3.experiment")).unwrap();
    run_experiment(&exp, dir.path()).unwrap();

    let manifest = dir.path().join("manifest.json");
    let original = fs::read_to_string(&manifest).unwrap();
    let mut m: serde_json::Value = serde_json::from_str(&original).unwrap();
    m["diagnostics"]["max_trace_drift"] = serde_json::json!(1e-6);
    fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
    let report = verify(dir.path()).unwrap();
    assert!(!report.passed());
    assert!(report.checks.iter().any(|c| c.name == "trace drift" && !c.passed));

    fs::write(&manifest, original).unwrap();
    fs::remove_file(dir.path().join("spectrum_0_1.csv")).unwrap();
    let report = verify(dir.path()).unwrap();
    assert!(report.checks.iter().any(|c| c.name == "files" && !c.passed));
}

#[test]
fn sweep_writes_table_and_fit() {
    let src = small_fig3(-0.8) + "\n[sweep]\nparameter = \"state.c_x\"\nvalues = [-0.6, -0.2, 0.4]\n";
    let src = src.replace("calibrate = true\ncalibration_beta = 0.125\n", "");
    let exp = parse_experiment_str(&src, Path::new("sweep.experiment")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&exp, dir.path()).unwrap();
    let sweep = m.sweep.unwrap();
    assert_eq!(sweep.points.len(), 3);
    assert!(sweep.relative_residual.unwrap() < 1e-9);
    assert!(dir.path().join("sweep.csv").is_file());
    assert!(dir.path().join("point_00/manifest.json").is_file());
    assert!(verify(dir.path()).unwrap().passed());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let exp = dir.path().join("small.experiment");
    fs::write(&exp, small_fig3(-0.8)).unwrap();
    let out = dir.path().join("out");

    let status = prepsy().args(["run"]).arg(&exp).arg("--out").arg(&out).args(["--workers", "2"]).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(prepsy().arg("verify").arg(&out).status().unwrap().code(), Some(0));

    let described = prepsy().arg("describe").arg(&exp).output().unwrap();
    assert_eq!(described.status.code(), Some(0));
    assert!(String::from_utf8(described.stdout).unwrap().contains("pulse_angle"));

    let empty = dir.path().join("empty.experiment");
    fs::write(&empty, "").unwrap();
    let failed = prepsy().arg("describe").arg(&empty).output().unwrap();
    assert_eq!(failed.status.code(), Some(2));
    assert!(String::from_utf8(failed.stderr).unwrap().contains("missing section [model]"));

    fs::remove_file(out.join("peaks_0_1.csv")).unwrap();
    assert_eq!(prepsy().arg("verify").arg(&out).status().unwrap().code(), Some(1));

    let env_workers = prepsy()
        .env("PREPSY_WORKERS", "1")
        .args(["run"])
        .arg(&exp)
        .arg("--out")
        .arg(dir.path().join("out1"))
        .status()
        .unwrap();
    assert_eq!(env_workers.code(), Some(0));
}
