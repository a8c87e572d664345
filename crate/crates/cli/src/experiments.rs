//! Canned experiments: smoothing of corner data, Lawson–Osserman sharpness,
//! tubular containment on exact solutions, and the averaged-form pipeline.

use std::path::{Path, PathBuf};

use graphflow_core::estimates::{
    averaged_form_barrier, curvature_scaling, residual_star_omega_general, star_omega_monotonicity,
    tubular_check, LocalizationBall, RadiusChoice, ScalingWeight,
};
use graphflow_core::flow::SnapshotKind;
use graphflow_core::forms::{EpsilonRule, SurfaceSamples};
use graphflow_core::geometry::sample_all;
use graphflow_core::initdata::{lawson_osserman_jacobian, GeneratorSpec};
use graphflow_core::{EstimateReport, FlowConfig, State, Surface, Trajectory};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifacts::{merged, report_header, ArtifactWriter};
use crate::commands::{embedded, flow, generate, halt_json, is_numerical_halt};
use crate::config::{load, FormSpec, Format};
use crate::monitors::build_form;
use crate::{CliError, CliResult, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExperimentName {
    Smoothing,
    LawsonOsserman,
    Tubular,
    AveragedForm,
}

impl ExperimentName {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentName::Smoothing => "smoothing",
            ExperimentName::LawsonOsserman => "lawson-osserman",
            ExperimentName::Tubular => "tubular",
            ExperimentName::AveragedForm => "averaged-form",
        }
    }
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

/// Log-spaced times `10⁻⁴ … 10⁻¹`, four per decade.
fn log_times() -> Vec<f64> {
    (0..=12)
        .map(|k| 1e-4 * 10f64.powf(k as f64 / 4.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothingConfig {
    pub n: usize,
    pub m: usize,
    pub slope: f64,
    pub points: usize,
    pub seed: u64,
    /// Mollification widths in grid cells; `0` is the raw corner data.
    pub sigma_cells: Vec<f64>,
    pub t_end: f64,
    pub record_times: Vec<f64>,
    pub ball_radius: f64,
    pub theta: f64,
    pub slope_window: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            n: 1,
            m: 1,
            slope: 0.75,
            points: 128,
            seed: 1,
            sigma_cells: vec![0.0, 2.0, 4.0],
            t_end: 0.1,
            record_times: log_times(),
            ball_radius: 1.2,
            theta: 0.5,
            slope_window: [1e-4, 1e-1],
            output_dir: None,
            formats: all_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LawsonOssermanConfig {
    pub points: usize,
    pub box_scale: f64,
    pub r0: f64,
    pub t_end: f64,
    pub record_every: usize,
    /// Random directions for the ray-constancy check of `*Ω`.
    pub ray_samples: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for LawsonOssermanConfig {
    fn default() -> Self {
        Self {
            points: 12,
            box_scale: 2.0,
            r0: 1.5,
            t_end: 0.01,
            record_every: 20,
            ray_samples: 200,
            seed: 11,
            output_dir: None,
            formats: all_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub generator: GeneratorSpec,
    pub flow: FlowConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TubularConfig {
    pub fixtures: Vec<Fixture>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

fn recorded_flow(t_end: f64, every: f64) -> FlowConfig {
    let mut cfg = FlowConfig::new(t_end);
    let count = (t_end / every).round() as usize;
    cfg.record_times = (1..=count).map(|k| every * k as f64).collect();
    cfg
}

impl Default for TubularConfig {
    fn default() -> Self {
        Self {
            fixtures: vec![
                Fixture {
                    generator: GeneratorSpec::Circle {
                        radius: 1.0,
                        points: 256,
                        ambient: 2,
                    },
                    flow: recorded_flow(0.375, 0.025),
                },
                Fixture {
                    generator: GeneratorSpec::Sphere {
                        radius: 1.0,
                        points: 32,
                        polar_band: graphflow_core::initdata::DEFAULT_POLAR_BAND,
                    },
                    flow: recorded_flow(0.1, 0.025),
                },
            ],
            output_dir: None,
            formats: all_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AveragedFormConfig {
    pub generator: GeneratorSpec,
    pub form: FormSpec,
    /// Evenly spaced snapshots of the barrier run on `[0, t₁]`.
    pub barrier_snapshots: usize,
    pub probe_points: usize,
    pub probe_seed: u64,
    /// Time of the residual evaluation of the averaged-form identity.
    pub residual_t_rec: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for AveragedFormConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorSpec::CornerGraph {
                n: 1,
                m: 1,
                slope: 0.25,
                points: 128,
                seed: 2,
                sigma_cells: 3.2,
            },
            form: FormSpec {
                r0: 0.8,
                smoothstep: Default::default(),
                epsilon: EpsilonRule::HalfGap,
            },
            barrier_snapshots: 4,
            probe_points: 2000,
            probe_seed: 7,
            residual_t_rec: 0.01,
            output_dir: None,
            formats: all_formats(),
        }
    }
}

fn config_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    path.map_or_else(|| Ok(T::default()), load)
}

fn output_dir(cli: Option<&Path>, config: &Option<PathBuf>, name: ExperimentName) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| config.clone())
        .unwrap_or_else(|| PathBuf::from("graphflow-out").join(name.label()))
}

/// Runs a named experiment with an optional config file (defaults otherwise).
pub fn cmd_experiment(
    name: ExperimentName,
    config: Option<&Path>,
    out: Option<&Path>,
) -> CliResult<Outcome> {
    match name {
        ExperimentName::Smoothing => {
            let cfg: SmoothingConfig = config_or_default(config)?;
            smoothing(&cfg, &output_dir(out, &cfg.output_dir, name))
        }
        ExperimentName::LawsonOsserman => {
            let cfg: LawsonOssermanConfig = config_or_default(config)?;
            lawson_osserman(&cfg, &output_dir(out, &cfg.output_dir, name))
        }
        ExperimentName::Tubular => {
            let cfg: TubularConfig = config_or_default(config)?;
            tubular(&cfg, &output_dir(out, &cfg.output_dir, name))
        }
        ExperimentName::AveragedForm => {
            let cfg: AveragedFormConfig = config_or_default(config)?;
            averaged_form(&cfg, &output_dir(out, &cfg.output_dir, name))
        }
    }
}

fn outcome_of(halted: bool, failed: bool) -> Outcome {
    if halted {
        Outcome::NumericalHalt
    } else if failed {
        Outcome::Violation
    } else {
        Outcome::Pass
    }
}

fn or_aborted(name: &str, r: graphflow_core::Result<EstimateReport>) -> EstimateReport {
    r.unwrap_or_else(|e| EstimateReport::aborted(name, e.to_string()))
}

/// Ball around the sample of largest `|A|²` at the start, i.e. on a kink.
fn kink_ball(initial: &State, radius: f64, theta: f64) -> CliResult<LocalizationBall> {
    let samples = sample_all(initial)?;
    let peak = (0..samples.len())
        .filter(|&i| initial.included(i))
        .max_by(|&a, &b| samples[a].a_norm2().total_cmp(&samples[b].a_norm2()))
        .ok_or_else(|| CliError::Usage("initial data has no included samples".into()))?;
    Ok(LocalizationBall {
        y0: initial.point(peak),
        radius,
        theta,
        r_choice: RadiusChoice::AmbientDistance,
    })
}

fn sigma_label(sigma: f64) -> String {
    format!("sigma_{}", sigma.to_string().replace('.', "p"))
}

/// `(t, min *Ω)` at the scheduled snapshots.
fn scheduled_min_star_omega(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.snapshots
        .iter()
        .zip(&traj.series)
        .filter(|(s, _)| s.kind == SnapshotKind::Scheduled)
        .map(|(_, row)| (row.t, row.min_star_omega))
        .collect()
}

fn smoothing(cfg: &SmoothingConfig, out: &Path) -> CliResult<Outcome> {
    if cfg.sigma_cells.len() < 2 {
        return Err(CliError::Usage(
            "smoothing needs at least 2 mollification levels".into(),
        ));
    }
    let mut flow_cfg = FlowConfig::new(cfg.t_end);
    flow_cfg.record_times = cfg.record_times.clone();
    flow_cfg.stencil = true;
    flow_cfg
        .validate()
        .map_err(|e| CliError::Usage(format!("flow: {e}")))?;
    let specs: Vec<GeneratorSpec> = cfg
        .sigma_cells
        .iter()
        .map(|&sigma| GeneratorSpec::CornerGraph {
            n: cfg.n,
            m: cfg.m,
            slope: cfg.slope,
            points: cfg.points,
            seed: cfg.seed,
            sigma_cells: sigma,
        })
        .collect();
    let inits = specs.iter().map(generate).collect::<CliResult<Vec<_>>>()?;
    let recorded = embedded(cfg);
    let writer = ArtifactWriter::create(out, &cfg.formats, &recorded, Some(cfg.seed))?;

    let mut levels = Vec::new();
    let mut series = Vec::new();
    let mut halted = false;
    let mut failed = false;
    for ((&sigma, spec), init) in cfg.sigma_cells.iter().zip(&specs).zip(inits) {
        let ball = kink_ball(&init, cfg.ball_radius, cfg.theta)?;
        let result = flow(init, &flow_cfg)?;
        let traj = &result.trajectory;
        let level = writer.subdir(&sigma_label(sigma))?;
        level.series(traj)?;
        let monotone = or_aborted("star_omega_monotonicity", star_omega_monotonicity(traj));
        let scaling = or_aborted(
            "curvature_scaling",
            curvature_scaling(
                traj,
                &ball,
                &ScalingWeight::BaseStarOmega,
                Some((cfg.slope_window[0], cfg.slope_window[1])),
            ),
        );
        level.monitor("star_omega_monotonicity", &monotone)?;
        level.monitor("curvature_scaling", &scaling)?;
        halted |= result.halt.is_some();
        failed |= !monotone.passed() || !scaling.passed();
        series.push(scheduled_min_star_omega(traj));
        levels.push(json!({
            "sigma_cells": sigma,
            "generator": spec,
            "directory": sigma_label(sigma),
            "halt": halt_json(&result),
            "ball": ball,
            "monitors": [monotone, scaling],
        }));
    }

    let mut table = String::from("t");
    for &sigma in &cfg.sigma_cells {
        table.push_str(&format!(",min_star_omega_{}", sigma_label(sigma)));
    }
    table.push_str(",max_abs_difference\n");
    let rows = series.iter().map(Vec::len).min().unwrap_or(0);
    let mut max_difference: f64 = 0.0;
    for r in 0..rows {
        let values: Vec<f64> = series.iter().map(|s| s[r].1).collect();
        let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - values.iter().cloned().fold(f64::INFINITY, f64::min);
        max_difference = max_difference.max(spread);
        table.push_str(&format!("{:e}", series[0][r].0));
        for v in &values {
            table.push_str(&format!(",{v:e}"));
        }
        table.push_str(&format!(",{spread:e}\n"));
    }
    writer.csv("cross_level.csv", &table)?;

    let outcome = outcome_of(halted, failed);
    let report = merged(
        report_header(
            "experiment smoothing",
            &recorded,
            specs.first(),
            Some(cfg.seed),
        ),
        json!({
            "levels": levels,
            "cross_level_max_difference": max_difference,
            "exit_code": outcome.code(),
        }),
    );
    writer.json("report.json", &report)?;
    Ok(outcome)
}

/// `*Ω` of the base plane on a graph with differential `df`.
fn graph_star_omega(df: &DMatrix<f64>) -> f64 {
    let n = df.ncols();
    let g = DMatrix::identity(n, n) + df.transpose() * df;
    1.0 / g.determinant().sqrt()
}

/// Largest change of `*Ω` of the cone along rays through the origin.
fn ray_constancy_gap(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap: f64 = 0.0;
    for _ in 0..samples {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = graph_star_omega(&lawson_osserman_jacobian(&x));
        for scale in [1e-3, 0.1, 0.5, 3.0, 1e3] {
            let y: Vec<f64> = x.iter().map(|v| v * scale).collect();
            gap = gap.max((graph_star_omega(&lawson_osserman_jacobian(&y)) - base).abs());
        }
    }
    gap
}

/// Tolerance of the ray-constancy check.
const RAY_TOLERANCE: f64 = 1e-8;

fn lawson_osserman(cfg: &LawsonOssermanConfig, out: &Path) -> CliResult<Outcome> {
    let spec = GeneratorSpec::LawsonOsserman {
        points: cfg.points,
        box_scale: cfg.box_scale,
    };
    let mut flow_cfg = FlowConfig::new(cfg.t_end);
    flow_cfg.record_every = cfg.record_every;
    flow_cfg
        .validate()
        .map_err(|e| CliError::Usage(format!("flow: {e}")))?;
    let init = generate(&spec)?;
    let recorded = embedded(cfg);
    let writer = ArtifactWriter::create(out, &cfg.formats, &recorded, Some(cfg.seed))?;

    let samples = SurfaceSamples::from_surface(&init)?;
    let form = build_form(
        &FormSpec {
            r0: cfg.r0,
            smoothstep: Default::default(),
            epsilon: EpsilonRule::HalfGap,
        },
        &init,
    );
    let (form, pipeline) = form?;
    let k_check = form.check_k_condition(&samples, pipeline.k)?;
    let mut centers = String::from("center,min_star_omega,samples_in_ball\n");
    for c in &k_check.centers {
        centers.push_str(&format!(
            "{},{:e},{}\n",
            c.center, c.min_star_omega, c.samples_in_ball
        ));
    }
    writer.csv("k_condition_centers.csv", &centers)?;
    let gap = ray_constancy_gap(cfg.ray_samples, cfg.seed);

    // The flow is diagnostic only: a clean numerical halt is a finding, not a failure.
    let result = flow(init, &flow_cfg)?;
    writer.series(&result.trajectory)?;
    let unexpected_halt = result.halt.as_ref().is_some_and(|e| !is_numerical_halt(e));

    let failed = k_check.passed || gap > RAY_TOLERANCE;
    let outcome = outcome_of(unexpected_halt, failed);
    let report = merged(
        report_header(
            "experiment lawson-osserman",
            &recorded,
            Some(&spec),
            Some(cfg.seed),
        ),
        json!({
            "pipeline": pipeline,
            "k_condition": {
                "threshold": k_check.threshold,
                "min_star_omega": k_check.min_star_omega,
                "passed": k_check.passed,
                "expected_to_fail": true,
                "centers": k_check.centers.len(),
            },
            "ray_constancy": {"max_gap": gap, "tolerance": RAY_TOLERANCE, "samples": cfg.ray_samples},
            "flow": {
                "halt": halt_json(&result),
                "final_time": result.trajectory.last().map(|s| s.time()),
                "asserted": false,
            },
            "exit_code": outcome.code(),
        }),
    );
    writer.json("report.json", &report)?;
    Ok(outcome)
}

fn generator_kind(spec: &GeneratorSpec) -> String {
    serde_json::to_value(spec)
        .ok()
        .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_string))
        .unwrap_or_default()
}

fn tubular(cfg: &TubularConfig, out: &Path) -> CliResult<Outcome> {
    if cfg.fixtures.is_empty() {
        return Err(CliError::Usage("tubular needs at least one fixture".into()));
    }
    let mut inits = Vec::new();
    for f in &cfg.fixtures {
        f.flow
            .validate()
            .map_err(|e| CliError::Usage(format!("flow: {e}")))?;
        inits.push(generate(&f.generator)?);
    }
    let recorded = embedded(cfg);
    let writer = ArtifactWriter::create(out, &cfg.formats, &recorded, None)?;
    let mut entries = Vec::new();
    let mut halted = false;
    let mut failed = false;
    for (k, (fixture, init)) in cfg.fixtures.iter().zip(inits).enumerate() {
        let result = flow(init, &fixture.flow)?;
        let dir = format!("fixture_{k}_{}", generator_kind(&fixture.generator));
        let sub = writer.subdir(&dir)?;
        sub.series(&result.trajectory)?;
        let report = or_aborted("tubular_check", tubular_check(&result.trajectory));
        sub.monitor("tubular_check", &report)?;
        halted |= result.halt.is_some();
        failed |= !report.passed();
        entries.push(json!({
            "directory": dir,
            "generator": fixture.generator,
            "halt": halt_json(&result),
            "report": report,
        }));
    }
    let outcome = outcome_of(halted, failed);
    let report = merged(
        report_header("experiment tubular", &recorded, None, None),
        json!({"fixtures": entries, "exit_code": outcome.code()}),
    );
    writer.json("report.json", &report)?;
    Ok(outcome)
}

fn averaged_form(cfg: &AveragedFormConfig, out: &Path) -> CliResult<Outcome> {
    if cfg.barrier_snapshots == 0 || cfg.probe_points == 0 {
        return Err(CliError::Usage(
            "barrier_snapshots and probe_points must be positive".into(),
        ));
    }
    let init = generate(&cfg.generator)?;
    let recorded = embedded(cfg);
    let writer = ArtifactWriter::create(out, &cfg.formats, &recorded, cfg.generator.seed())?;

    let samples = SurfaceSamples::from_surface(&init)?;
    let (form, pipeline) = build_form(&cfg.form, &init)?;
    let k_check = form.check_k_condition(&samples, pipeline.k)?;
    let probe = form.probe_partition(&samples, cfg.probe_points, cfg.probe_seed)?;
    writer.json("averaged_form.json", &form)?;
    writer.json("constants.json", &pipeline)?;

    let mut barrier_cfg = FlowConfig::new(pipeline.t1);
    let count = cfg.barrier_snapshots;
    barrier_cfg.record_times = (1..=count)
        .map(|k| k as f64 * pipeline.t1 / count as f64)
        .collect();
    barrier_cfg.dt = Some(pipeline.t1 / (2 * count) as f64);
    let barrier_run = flow(init.clone(), &barrier_cfg)?;
    writer.series(&barrier_run.trajectory)?;
    let barrier = or_aborted(
        "averaged_form_barrier",
        averaged_form_barrier(&barrier_run.trajectory, &form, &pipeline),
    );
    writer.monitor("averaged_form_barrier", &barrier)?;

    let mut residual_cfg = FlowConfig::new(2.0 * cfg.residual_t_rec);
    residual_cfg.record_times = vec![cfg.residual_t_rec];
    residual_cfg.stencil = true;
    let residual_run = flow(init, &residual_cfg)?;
    let residual = or_aborted(
        "averaged_form_identity",
        residual_star_omega_general(&residual_run.trajectory, &form),
    );
    writer.monitor("averaged_form_identity", &residual)?;

    let probe_ok = probe.max_sum_defect <= 1e-10
        && probe.max_dp <= probe.dp_bound
        && probe.max_d2p <= probe.d2p_bound;
    let ratio_ok = barrier.extras.get("min_ratio").is_none_or(|r| *r > 5.0);
    let failed = !k_check.passed || !probe_ok || !barrier.passed() || !ratio_ok;
    let halted = barrier_run.halt.is_some() || residual_run.halt.is_some();
    let outcome = outcome_of(halted, failed);
    let report = merged(
        report_header(
            "experiment averaged-form",
            &recorded,
            Some(&cfg.generator),
            cfg.generator.seed(),
        ),
        json!({
            "centers": form.len(),
            "pipeline": pipeline,
            "k_condition": {
                "threshold": k_check.threshold,
                "min_star_omega": k_check.min_star_omega,
                "passed": k_check.passed,
            },
            "partition_probe": probe,
            "barrier": barrier,
            "barrier_halt": halt_json(&barrier_run),
            "identity_residual": residual,
            "identity_halt": halt_json(&residual_run),
            "exit_code": outcome.code(),
        }),
    );
    writer.json("report.json", &report)?;
    Ok(outcome)
}
