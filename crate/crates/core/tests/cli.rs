//! End-to-end runs of the command-line tool.

use std::fs;
use std::path::Path;
use std::process::Command;

fn ccgate() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ccgate"));
    cmd.env_remove("CCGATE_OUT_DIR");
    cmd
}

fn write_spec(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const PHASE_SPEC: &str = r#"
kind = "phase_report"
preset = "fig2"
seed = 3
[params]
delta = 0.08
[[sweep]]
name = "nu"
min = 0.01
max = 0.07
points = 4
"#;

#[test]
fn identical_specs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.toml", PHASE_SPEC);
    for (out, threads) in [("a", "1"), ("b", "3")] {
        let status = ccgate()
            .args(["run", spec.to_str().unwrap(), "--out"])
            .arg(dir.path().join(out))
            .args(["--threads", threads])
            .status()
            .unwrap();
        assert!(status.success());
    }
    for file in ["phase_report_phases.csv", "phase_report_manifest.json"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
    let csv = fs::read_to_string(dir.path().join("a/phase_report_phases.csv")).unwrap();
    assert!(csv.starts_with("# format_version: 1"));
    assert!(csv.contains("# params: "));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/phase_report_manifest.json")).unwrap()).unwrap();
    for key in ["detuning_a", "detuning_b", "g_a", "g_b", "omega_a", "omega_b", "delta", "nu", "gamma_a", "n_max"] {
        assert!(manifest["resolved_params"][key].is_number(), "{key} missing");
    }
    assert_eq!(manifest["format_version"], 1);
}

#[test]
fn malformed_spec_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (i, body) in [
        "kind = \"phase_report\"\n[[sweep]]\nname = \"nu\"\nmin = 0.0\nmax = 1.0\npoints = 1\n",
        "kind = [\"broken\"",
        "kind = \"phase_report\"\npreset = \"nope\"\n",
    ]
    .iter()
    .enumerate()
    {
        let spec = write_spec(dir.path(), &format!("bad{i}.toml"), body);
        let status = ccgate()
            .args(["run", spec.to_str().unwrap(), "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(2), "spec {i}");
        assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
    }
    let status = ccgate()
        .args(["run", dir.path().join("missing.toml").to_str().unwrap()])
        .current_dir(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn physics_precondition_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // Normal-mode detunings of opposite sign cannot close both loops.
    let spec = write_spec(
        dir.path(),
        "s.toml",
        "kind = \"tune_pi\"\npreset = \"fig3\"\n[params]\ndelta = 0.01\nnu = 0.05\n",
    );
    let out = dir.path().join("out");
    let status = ccgate()
        .args(["run", spec.to_str().unwrap(), "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn env_var_sets_output_dir_and_preset_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.toml", PHASE_SPEC);
    let out = dir.path().join("env_out");
    let status = ccgate()
        .env("CCGATE_OUT_DIR", &out)
        .args(["run", spec.to_str().unwrap(), "--preset", "fig3_alt_gB"])
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("phase_report_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["preset"], "fig3_alt_gB");
    assert!((manifest["resolved_params"]["g_b"].as_f64().unwrap() - 0.008).abs() < 1e-15);
}

#[test]
fn surface_marks_resonant_points() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "s.toml",
        "kind = \"fig2_surface\"\n[[sweep]]\nname = \"nu\"\nmin = 1.0\nmax = 5.0\npoints = 5\nunit = \"g_a\"\n[[sweep]]\nname = \"delta\"\nmin = 1.0\nmax = 5.0\npoints = 5\nunit = \"g_a\"\n",
    );
    let status = ccgate()
        .args(["run", spec.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(dir.path().join("fig2_surface_surface.csv")).unwrap();
    let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(data.len(), 25);
    assert_eq!(data.iter().filter(|l| l.contains("NaN")).count(), 5);
    assert!(csv.contains("# sentinel_rows: [0,6,12,18,24]"));
    assert!(csv.lines().any(|l| l.starts_with("nu,delta,") && l.contains("t0_ns")));
}
