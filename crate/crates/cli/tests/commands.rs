use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_percond");

fn disk_config(n: usize, eps: &str) -> String {
    format!(
        r#"{{
  "geometry": {{"shape": "ellipse", "a": 1.0, "b": 1.0, "N": {n}}},
  "materials": {{"lambda_plus": 2.0, "lambda_minus": 1.0}},
  "rho_law": {{"type": "power", "c": 1.0, "a": 1.0}},
  "eps": {eps},
  "seed": 7
}}"#
    )
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn percond(args: &[&str], config: &Path, out: &Path, jobs: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).arg("--config").arg(config).arg("--out").arg(out);
    match jobs {
        Some(j) => cmd.env("PERCOND_JOBS", j),
        None => cmd.env_remove("PERCOND_JOBS"),
    };
    cmd.output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_result_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &disk_config(64, "[0.1]"));
    let out = dir.path().join("out");
    let o = percond(&["solve"], &cfg, &out, None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("result.json"));
    let l = r["result"]["lambda_eff"].as_array().unwrap();
    assert_eq!(l.len(), 2);
    assert!(l.iter().all(|row| row.as_array().unwrap().len() == 2));
    assert!(r["condition"]["fixed_boundary"].as_f64().unwrap() >= 1.0);
    assert_eq!(r["densities"].as_array().unwrap().len(), 2);
    let fields = std::fs::read_to_string(out.join("fields.csv")).unwrap();
    let mut lines = fields.lines();
    assert_eq!(lines.next(), Some("# percond-schema v1"));
    assert_eq!(lines.next(), Some("j,x,y,phase,u,du_dx,du_dy"));
    assert_eq!(lines.count(), 2 * 16);
}

#[test]
fn solve_is_deterministic_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &disk_config(64, "[0.12]"));
    let runs: Vec<(Vec<u8>, Vec<u8>)> = [Some("1"), Some("4"), None]
        .iter()
        .enumerate()
        .map(|(i, jobs)| {
            let out = dir.path().join(format!("run{i}"));
            assert!(percond(&["solve"], &cfg, &out, *jobs).status.success());
            (std::fs::read(out.join("fields.csv")).unwrap(), std::fs::read(out.join("result.json")).unwrap())
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn seed_changes_probe_points() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), &disk_config(32, "[0.1]"));
    assert!(percond(&["solve"], &a, &dir.path().join("a"), None).status.success());
    let b = dir.path().join("b.json");
    std::fs::write(&b, disk_config(32, "[0.1]").replace("\"seed\": 7", "\"seed\": 8")).unwrap();
    assert!(percond(&["solve"], &b, &dir.path().join("b"), None).status.success());
    let fa = std::fs::read(dir.path().join("a/fields.csv")).unwrap();
    let fb = std::fs::read(dir.path().join("b/fields.csv")).unwrap();
    assert_ne!(fa, fb);
}

#[test]
fn inadmissible_eps_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &disk_config(32, "[0.5]"));
    let out = dir.path().join("out");
    let o = percond(&["solve"], &cfg, &out, None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("e0"), "{err}");
    assert!(!out.join("result.json").exists());
}

#[test]
fn schema_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = [
        disk_config(32, "[0.1]").replace("\"seed\"", "\"sead\""),
        disk_config(32, "[0.1, 0.05]"),
        disk_config(31, "[0.1]"),
        disk_config(32, "[0.1]").replace("\"a\": 1.0, \"b\"", "\"a\": 1.0, \"c\": 1.0, \"b\""),
        "{ not json".to_string(),
    ];
    for text in bad {
        let cfg = write_config(dir.path(), &text);
        assert_eq!(percond(&["solve"], &cfg, &out, None).status.code(), Some(2), "{text}");
    }
    let missing = dir.path().join("missing.json");
    assert_eq!(percond(&["solve"], &missing, &out, None).status.code(), Some(2));
    let cfg = write_config(dir.path(), &disk_config(32, "[0.1]"));
    assert_eq!(percond(&["solve"], &cfg, &out, Some("zero")).status.code(), Some(2));
}

#[test]
fn empty_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &disk_config(32, "[]"));
    assert_eq!(percond(&["sweep"], &cfg, &out, None).status.code(), Some(2));
    let cfg = write_config(dir.path(), &disk_config(32, "[0.05, 0.1]"));
    assert_eq!(percond(&["sweep"], &cfg, &out, None).status.code(), Some(2));
    assert!(!out.join("sweep.csv").exists());
}

#[test]
fn disk_sweep_orders_fits_and_limit_agree() {
    let dir = tempfile::tempdir().unwrap();
    let grid: Vec<String> = (0..8).map(|k| format!("{}", 0.2 * 2f64.powf(-(k as f64) / 2.0))).collect();
    let cfg = write_config(dir.path(), &disk_config(128, &format!("[{}]", grid.join(", "))));
    let out = dir.path().join("out");
    let o = percond(&["sweep"], &cfg, &out, None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# percond-schema v1"));
    assert_eq!(lines.next(), Some("eps,eps_prime,k,j,lambda_eff,Lambda,Lambda_plus,Lambda_minus,f_term"));
    assert_eq!(lines.count(), 8 * 4);

    let orders = read_json(&out.join("orders.json"));
    let o11 = orders["orders"]
        .as_array()
        .unwrap()
        .iter()
        .find(|o| o["k"] == 1 && o["j"] == 1)
        .unwrap();
    assert_eq!(o11["estimate"]["status"], "fitted");
    assert!(o11["estimate"]["slope"].as_f64().unwrap() >= 2.8, "{o11}");

    let plot = std::fs::read_to_string(out.join("plot.gp")).unwrap();
    assert!(plot.contains("sweep.csv") && plot.contains("set logscale xy"));

    let v = percond(&["validate"], &cfg, &out, None);
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stdout));
    let limit = read_json(&out.join("validation.json"))["limit"][0][0].as_f64().unwrap();
    let fits = read_json(&out.join("fit.json"));
    let f11 = fits["fits"].as_array().unwrap().iter().find(|f| f["k"] == 1 && f["j"] == 1).unwrap();
    let a0 = f11["fit"]["coefficients"][0].as_f64().unwrap();
    let residual = f11["fit"]["residual"].as_f64().unwrap();
    let estimate = f11["fit"]["intercept_error"].as_f64().unwrap();
    let gap = (a0 - limit).abs();
    assert!(gap <= estimate, "intercept {a0}, limit {limit}, error estimate {estimate:e}");
    assert!(gap <= 2.0 * residual, "intercept {a0}, limit {limit}, residual {residual:e}");
}

fn checks(out: &Path) -> Vec<(String, bool)> {
    read_json(&out.join("validation.json"))["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["name"].as_str().unwrap().to_string(), c["pass"].as_bool().unwrap()))
        .collect()
}

#[test]
fn validate_default_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &disk_config(128, "[]"));
    let out = dir.path().join("out");
    let o = percond(&["validate"], &cfg, &out, None);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    let c = checks(&out);
    assert_eq!(c.len(), 6);
    assert!(c.iter().all(|(_, pass)| *pass), "{c:?}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 6);
}

#[test]
fn validate_coarse_grid_uses_looser_tolerances() {
    let dir = tempfile::tempdir().unwrap();
    let text = disk_config(32, "[]").replace(
        "\"geometry\": {\"shape\": \"ellipse\", \"a\": 1.0, \"b\": 1.0, \"N\": 32}",
        "\"geometry\": {\"shape\": \"star\", \"r0\": 1.0, \"amp\": 0.15, \"lobes\": 3, \"N\": 32}",
    );
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = percond(&["validate"], &cfg, &out, None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = read_json(&out.join("validation.json"));
    let gauss = &report["checks"][0];
    assert_eq!(gauss["name"], "gauss_identity");
    assert!(gauss["tolerance"].as_f64().unwrap() > 1e-8);
}

#[test]
fn perturbed_w_diagonal_fails_gauss_check() {
    let dir = tempfile::tempdir().unwrap();
    let text = disk_config(64, "[]").replace("\"seed\": 7", "\"seed\": 7, \"test_hooks\": {\"w_diagonal_perturbation\": 1e-3}");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = percond(&["validate"], &cfg, &out, None);
    assert_eq!(o.status.code(), Some(1));
    let c = checks(&out);
    assert!(c.iter().any(|(name, pass)| name == "gauss_identity" && !pass), "{c:?}");
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL GaussIdentity"));
}
