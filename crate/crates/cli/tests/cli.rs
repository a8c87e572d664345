use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn graphflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphflow"))
        .args(args)
        .env("GRAPHFLOW_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn run_config(config: &Path, out: &Path) -> Output {
    graphflow(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

const CIRCLE_RUN: &str = r#"{
  "generator": {"kind": "circle", "radius": 1.0, "points": 64},
  "flow": {"t_end": 0.1, "record_times": [0.025, 0.05, 0.075], "stencil": true},
  "monitors": [
    {"name": "tubular_check"},
    {"name": "curvature_growth"},
    {"name": "residual_position_norm", "assert": false}
  ]
}"#;

#[test]
fn circle_run_writes_artifacts_and_passes() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(&tmp, "run.json", CIRCLE_RUN);
    let out = tmp.path().join("out");
    let result = run_config(&config, &out);
    assert_eq!(result.status.code(), Some(0), "{result:?}");

    let series = fs::read_to_string(out.join("series.csv")).unwrap();
    let mut lines = series.lines();
    assert!(lines.next().unwrap().starts_with("# graphflow "));
    assert!(lines.next().unwrap().starts_with("t,min_star_omega,"));
    assert!(lines.count() >= 5);
    for k in 0..5 {
        assert!(
            out.join(format!("snapshot_{k}.csv")).exists(),
            "snapshot {k}"
        );
    }
    assert!(out.join("tubular_check.csv").exists());
    assert!(out.join("residual_position_norm.csv").exists());

    let report = report(&out);
    assert_eq!(report["schema"], "graphflow.report");
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["exit_code"], 0);
    assert!(report["halt"].is_null());
    assert!(report["config"].get("output_dir").is_none());
    assert_eq!(report["monitors"].as_array().unwrap().len(), 3);

    let times: Vec<f64> = report["snapshot_times"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t.as_f64().unwrap())
        .collect();
    assert_eq!(times, vec![0.0, 0.025, 0.05, 0.075, 0.1]);
    let radii: Vec<f64> = (0..times.len())
        .map(|k| mean_norm_of_f(&out.join(format!("snapshot_{k}.csv"))))
        .collect();
    for (radius, t) in radii.iter().zip(&times) {
        assert!(
            (radius - (1.0 - 2.0 * t).sqrt()).abs() < 1e-3,
            "{radius} at {t}"
        );
    }
    assert!(radii.windows(2).all(|w| w[1] < w[0]), "{radii:?}");
}

/// Mean of `|F|` over the rows of a snapshot CSV with `F*` columns.
fn mean_norm_of_f(path: &Path) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().skip(1);
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let columns: Vec<usize> = (0..header.len())
        .filter(|&c| header[c].starts_with('F'))
        .collect();
    assert_eq!(columns.len(), 2);
    let norms: Vec<f64> = lines
        .map(|row| {
            let fields: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
            columns
                .iter()
                .map(|&c| fields[c] * fields[c])
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    norms.iter().sum::<f64>() / norms.len() as f64
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(&tmp, "run.json", CIRCLE_RUN);
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    assert_eq!(run_config(&config, &first).status.code(), Some(0));
    assert_eq!(run_config(&config, &second).status.code(), Some(0));
    let mut names: Vec<_> = fs::read_dir(&first)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        assert_eq!(
            fs::read(first.join(&name)).unwrap(),
            fs::read(second.join(&name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn unknown_monitor_is_a_usage_error_without_artifacts() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        "bad.json",
        r#"{"generator": {"kind": "circle", "radius": 1.0, "points": 32},
            "flow": {"t_end": 0.01},
            "monitors": [{"name": "no_such_monitor"}]}"#,
    );
    let out = tmp.path().join("out");
    let result = run_config(&config, &out);
    assert_eq!(result.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&result.stderr).contains("no_such_monitor"));
    assert!(!out.exists());
}

#[test]
fn malformed_command_lines_are_usage_errors() {
    assert_eq!(graphflow(&["run"]).status.code(), Some(64));
    assert_eq!(graphflow(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(
        graphflow(&["experiment", "no-such-experiment"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(
        graphflow(&["run", "--config", "/nonexistent/config.json"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(graphflow(&["--help"]).status.code(), Some(0));
}

#[test]
fn collapsing_circle_is_a_numerical_halt() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        "halt.json",
        r#"{"generator": {"kind": "circle", "radius": 1.0, "points": 32},
            "flow": {"t_end": 0.6},
            "monitors": [{"name": "tubular_check"}]}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(run_config(&config, &out).status.code(), Some(2));
    let report = report(&out);
    assert_eq!(report["exit_code"], 2);
    assert_eq!(report["halt"]["numerical"], true);
    let halt_time = report["halt"]["halt_time"].as_f64().unwrap();
    assert!(halt_time > 0.45 && halt_time < 0.5, "{halt_time}");
}

#[test]
fn failing_asserted_monitor_exits_one() {
    let tmp = TempDir::new().unwrap();
    // The ball lies far from the curve, so the scaling monitor cannot run.
    let config = write_config(
        &tmp,
        "violation.json",
        r#"{"generator": {"kind": "circle", "radius": 1.0, "points": 32},
            "flow": {"t_end": 0.02, "record_times": [0.01]},
            "monitors": [{"name": "curvature_scaling",
                          "ball": {"y0": [9.0, 9.0], "radius": 0.5, "theta": 0.5}}]}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(run_config(&config, &out).status.code(), Some(1));
    assert_eq!(report(&out)["monitors"][0]["report"]["status"], "aborted");
}

#[test]
fn identity_study_needs_three_levels() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        "two.json",
        r#"{"generator": {"kind": "circle", "radius": 1.0, "points": 32},
            "levels": [32, 64], "identities": ["position_norm"]}"#,
    );
    let out = tmp.path().join("out");
    let result = graphflow(&[
        "verify-identities",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(64));
    assert!(!out.exists());
}

#[test]
fn identity_study_on_a_perturbed_circle_converges() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        "ids.json",
        r#"{"generator": {"kind": "random_fourier", "n": 1, "m": 1, "points": 32,
                          "modes": 3, "amplitude": 0.05, "seed": 17, "immersed": true},
            "levels": [32, 64, 128],
            "identities": ["star_omega", "position_norm", "plane_distance"]}"#,
    );
    let out = tmp.path().join("out");
    let result = graphflow(&[
        "verify-identities",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let table = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(
        table.lines().nth(1).unwrap(),
        "identity,points,spacing,max_abs_residual,status"
    );
    assert_eq!(table.lines().count(), 2 + 9);
    let report = report(&out);
    assert_eq!(report["seed"], 17);
    for summary in report["identities"].as_array().unwrap() {
        assert_eq!(summary["status"], "pass");
        assert!(summary["study"]["order"].as_f64().unwrap() > 1.7);
    }
}

fn experiment(name: &str, out: &Path, config: Option<&Path>) -> Output {
    let mut args = vec!["experiment", name, "--out", out.to_str().unwrap()];
    if let Some(path) = config {
        args.extend(["--config", path.to_str().unwrap()]);
    }
    graphflow(&args)
}

#[test]
fn tubular_experiment_passes_on_exact_solutions() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        "tubular.json",
        r#"{"fixtures": [
              {"generator": {"kind": "circle", "radius": 1.0, "points": 64},
               "flow": {"t_end": 0.2, "record_times": [0.05, 0.1, 0.15]}},
              {"generator": {"kind": "sphere", "radius": 1.0, "points": 16},
               "flow": {"t_end": 0.05, "record_times": [0.025]}}]}"#,
    );
    let out = tmp.path().join("out");
    let result = experiment("tubular", &out, Some(&config));
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    assert!(out.join("fixture_0_circle").join("series.csv").exists());
    assert!(out.join("fixture_1_sphere").join("series.csv").exists());
}

#[test]
fn lawson_osserman_experiment_flags_the_failed_condition() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let result = experiment("lawson-osserman", &out, None);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let report = report(&out);
    assert_eq!(report["k_condition"]["passed"], false);
    assert!(report["k_condition"]["min_star_omega"].as_f64().unwrap() < 0.998);
    assert!(report["ray_constancy"]["max_gap"].as_f64().unwrap() < 1e-8);
    assert_eq!(report["seed"], 11);
    assert!(out.join("k_condition_centers.csv").exists());
}

#[test]
fn smoothing_experiment_writes_one_directory_per_level() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        "smoothing.json",
        r#"{"points": 64, "sigma_cells": [0.0, 2.0], "t_end": 0.01,
            "record_times": [0.0001, 0.001, 0.01], "slope_window": [0.0001, 0.01]}"#,
    );
    let out = tmp.path().join("out");
    let result = experiment("smoothing", &out, Some(&config));
    assert!(matches!(result.status.code(), Some(0 | 1)), "{result:?}");
    for level in ["sigma_0", "sigma_2"] {
        assert!(out.join(level).join("series.csv").exists(), "{level}");
        assert!(out.join(level).join("curvature_scaling.csv").exists());
    }
    let table = fs::read_to_string(out.join("cross_level.csv")).unwrap();
    assert_eq!(
        table.lines().nth(1).unwrap(),
        "t,min_star_omega_sigma_0,min_star_omega_sigma_2,max_abs_difference"
    );
    let report = report(&out);
    assert_eq!(report["levels"].as_array().unwrap().len(), 2);
    for level in report["levels"].as_array().unwrap() {
        assert_eq!(level["monitors"][0]["monitor"], "star_omega_monotonicity");
        assert_eq!(level["monitors"][0]["status"], "pass");
    }
}

#[test]
fn averaged_form_experiment_passes_with_defaults() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let result = experiment("averaged-form", &out, None);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let constants: Value =
        serde_json::from_str(&fs::read_to_string(out.join("constants.json")).unwrap()).unwrap();
    for key in ["c6", "c7", "k", "t1"] {
        assert!(constants[key].as_f64().unwrap().is_finite(), "{key}");
    }
    assert!(out.join("averaged_form_barrier.csv").exists());
}
