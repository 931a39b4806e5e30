use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn choitomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_choitomo"))
        .args(args)
        .env_remove("CHOITOMO_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const GAD_CONFIG: &str =
    r#"{"model": "gad", "theta_true": [0.7, 0.3], "n_grid": [100, 1000, 10000], "repetitions": 5, "seed": 42}"#;

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn list_models_prints_every_family() {
    let out = choitomo(&["list-models"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["gad", "pauli_t", "gen_pauli_3"] {
        assert!(text.lines().any(|l| l.starts_with(id)), "{id} missing from\n{text}");
    }
}

#[test]
fn validate_reports_the_offending_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        "bad.json",
        r#"{"model": "gad", "theta_true": [0.1, 0.2, 0.3], "n_grid": [100], "seed": 1}"#,
    );
    let out = choitomo(&["validate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("theta_true"));

    let good = write_config(dir.path(), "good.json", GAD_CONFIG);
    assert_eq!(choitomo(&["validate", "--config", &good]).status.code(), Some(0));
}

#[test]
fn unknown_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"model": "amplitude", "theta_true": [0.1], "n_grid": [100], "seed": 1}"#,
    );
    let out_dir = dir.path().join("out");
    let out = choitomo(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn missing_config_file_is_a_config_error() {
    assert_eq!(choitomo(&["validate", "--config", "/nonexistent/c.json"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", GAD_CONFIG);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let target = blocker.join("out");
    let out = choitomo(&["run", "--config", &cfg, "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gad_run_writes_reports_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", GAD_CONFIG);
    let out_dir = dir.path().join("out");
    let out = choitomo(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    for svg in ["fidelity.svg", "mean.svg", "variance.svg", "hs_error.svg"] {
        let text = fs::read_to_string(out_dir.join(svg)).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"), "{svg}");
    }
    assert!(!out_dir.join("solver_log.csv").exists());

    let (header, rows) = csv_rows(&out_dir.join("report.csv"));
    assert_eq!(header, ["n", "rep", "gamma", "p", "fidelity", "hs_error", "objective"]);
    assert_eq!(rows.len(), 15);

    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let aggregates = report["aggregates"].as_array().unwrap();
    assert_eq!(aggregates.len(), 3);
    for agg in aggregates {
        let n = agg["n"].as_u64().unwrap().to_string();
        let group: Vec<Vec<f64>> = rows
            .iter()
            .filter(|r| r[0] == n)
            .map(|r| r[2..].iter().map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(group.len(), 5);
        let mean = |col: usize| group.iter().map(|r| r[col]).sum::<f64>() / group.len() as f64;
        assert!((agg["mean_fidelity"].as_f64().unwrap() - mean(2)).abs() < 1e-12);
        assert!((agg["mean_hs_error"].as_f64().unwrap() - mean(3)).abs() < 1e-12);
        for (i, m) in agg["mean_theta"].as_array().unwrap().iter().enumerate() {
            assert!((m.as_f64().unwrap() - mean(i)).abs() < 1e-12);
            let var = group.iter().map(|r| (r[i] - mean(i)).powi(2)).sum::<f64>() / (group.len() - 1) as f64;
            assert!((agg["variance"][i].as_f64().unwrap() - var).abs() < 1e-12);
        }
    }
}

#[test]
fn exact_mode_gives_one_perfect_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"model": "pauli_t", "theta_true": [0.5, 0.3, 0.2], "n_grid": [100], "repetitions": 3, "seed": 7}"#,
    );
    let out_dir = dir.path().join("out");
    let out = choitomo(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--exact"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = csv_rows(&out_dir.join("report.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "inf");
    let fidelity: f64 = rows[0][5].parse().unwrap();
    assert!((1.0 - fidelity).abs() < 1e-6);
}

#[test]
fn verbose_writes_solver_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"model": "gad", "theta_true": [0.7, 0.3], "n_grid": [1000], "repetitions": 2, "seed": 5}"#,
    );
    let out_dir = dir.path().join("out");
    let out = choitomo(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--verbose"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stdout).unwrap().contains("n=1000"));
    let (header, rows) = csv_rows(&out_dir.join("solver_log.csv"));
    assert_eq!(header, ["n", "rep", "pass", "mu", "newton_steps", "objective", "min_eig"]);
    assert!(!rows.is_empty());
}

#[test]
fn seed_override_and_repeat_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", GAD_CONFIG);
    let run = |name: &str, extra: &[&str]| {
        let out_dir = dir.path().join(name);
        let mut args = vec!["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(choitomo(&args).status.code(), Some(0));
        fs::read(out_dir.join("report.csv")).unwrap()
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let c = run("c", &["--seed", "43"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}
