//! End-to-end checks of the `robin-green` binary: pipeline runs, manifest
//! determinism, catalog errors, and the thin subcommands.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robin-green"))
}

fn write_config(dir: &Path, pipeline: &str, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    let text = format!(
        r#"
seed = 7
output = "{out}"
pipeline = [{pipeline}]

[domain]
kind = "interval"
a = 0.0
b = 1.0
cells = 32

[coefficients]
name = "laplace"
m = 1
lambda_tilde = 0.5

[boundary]
theta = "theta_const(1)"

[time]
t0 = 0.0
t1 = 0.5
steps = 32
scheme = "implicit_euler"
{extra}
"#,
        out = dir.join("out").display(),
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn coercivity_only_pipeline_reports_positive_theta0() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\"coercivity\"", "");
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_ok(&out);
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/coercivity.json")).unwrap(),
    )
    .unwrap();
    assert!(report["theta0"].as_f64().unwrap() > 0.0);
    assert!(report["converged"].as_bool().unwrap());
    assert!(report["config"]["domain"].is_object());
}

#[test]
fn full_pipeline_emits_a_hashed_manifest_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "\"mesh\", \"validate\", \"coercivity\", \"solve\", \"green\", \"elliptic-green\", \"verify\"",
        "",
    );
    let hashes = |run: usize| -> Vec<(String, String)> {
        let out_dir = dir.path().join(format!("run{run}"));
        let out = bin()
            .arg("run")
            .arg(&cfg)
            .env("ROBIN_GREEN_OUT", &out_dir)
            .output()
            .unwrap();
        assert_ok(&out);
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out_dir.join("manifest.json")).unwrap(),
        )
        .unwrap();
        manifest["artifacts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| {
                (
                    a["path"].as_str().unwrap().to_string(),
                    a["sha256"].as_str().unwrap().to_string(),
                )
            })
            .collect()
    };
    let first = hashes(1);
    assert!(first.len() >= 5, "only {} artifacts", first.len());
    let second = hashes(2);
    assert_eq!(first, second, "same config and seed must hash identically");
}

#[test]
fn unknown_catalog_name_fails_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\"coercivity\"", "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("\"laplace\"", "\"warp(3)\"");
    std::fs::write(&cfg, text).unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp"));
}

#[test]
fn stage_failure_names_the_stage_and_keeps_prior_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    // theta_zero makes theta0 = 0, so elliptic-green must abort
    let cfg = write_config(dir.path(), "\"mesh\", \"elliptic-green\"", "");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("theta_const(1)", "theta_zero");
    std::fs::write(&cfg, text).unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("elliptic-green"));
    assert!(dir.path().join("out/mesh.json").exists());
}

#[test]
fn green_subcommand_emits_a_column_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\"green\"", "");
    let out_file = dir.path().join("col.csv");
    let out = bin()
        .args(["green"])
        .arg(&cfg)
        .args(["--source-vertex", "17", "--column", "0", "--out"])
        .arg(&out_file)
        .output()
        .unwrap();
    assert_ok(&out);
    let text = std::fs::read_to_string(&out_file).unwrap();
    assert!(text.starts_with("# source_vertex=17 column=0"));
    assert!(text.lines().count() > 32);
}

#[test]
fn oracle_series_feeds_the_gaussian_fit() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("k.csv");
    let out = bin()
        .args(["oracle", "series", "--theta", "1", "1", "--t", "1e-3", "--points", "41"])
        .arg("--out")
        .arg(&samples)
        .output()
        .unwrap();
    assert_ok(&out);
    let text = std::fs::read_to_string(&samples).unwrap();
    assert!(text.lines().next().unwrap().contains("source"));
    assert!(text.contains(",oracle,"));
    let fit_file = dir.path().join("fit.json");
    let out = bin()
        .args(["verify", "gaussian", "--samples"])
        .arg(&samples)
        .args(["--dim", "1", "--diam", "1.0", "--slack", "2.0", "--out"])
        .arg(&fit_file)
        .output()
        .unwrap();
    assert_ok(&out);
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fit_file).unwrap()).unwrap();
    let kappa = fit["kappa"].as_f64().unwrap();
    assert!(kappa > 0.1 && kappa < 0.3, "kappa = {kappa}");
    assert_eq!(fit["violations"].as_u64().unwrap(), 0);
}

#[test]
fn verify_decay_passes_on_the_catalog_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\"verify\"", "");
    let out = bin().args(["verify", "decay"]).arg(&cfg).output().unwrap();
    assert_ok(&out);
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));
}

#[test]
fn jobs_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\"green\"", "");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("name = \"laplace\"", "name = \"system2_skew(0.4)\"")
        .replace("m = 1", "m = 2");
    std::fs::write(&cfg, text).unwrap();
    let run = |jobs: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = bin()
            .args(["run", "--jobs", jobs])
            .arg(&cfg)
            .env("ROBIN_GREEN_OUT", &out_dir)
            .output()
            .unwrap();
        assert_ok(&out);
        (
            std::fs::read_to_string(out_dir.join("green_column_0.csv")).unwrap(),
            std::fs::read_to_string(out_dir.join("green_column_1.csv")).unwrap(),
        )
    };
    assert_eq!(run("1", "serial"), run("4", "parallel"));
}
