//! `run` and `verify-identities`.

use std::path::Path;

use graphflow_core::estimates::{
    residual_plane_distance, residual_position_norm, residual_star_omega,
    residual_star_omega_general, residual_star_omega_sv, ConvergenceStudy,
};
use graphflow_core::flow::RunResult;
use graphflow_core::{
    run, ConstantNForm, Error, EstimateReport, FlowConfig, State, Status, Surface, Trajectory,
};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifacts::{merged, report_header, ArtifactWriter};
use crate::config::{IdentityConfig, IdentityName, RunConfig};
use crate::monitors::{build_form, evaluate_all, file_stems};
use crate::{CliError, CliResult, Outcome};

/// Config as recorded in artifacts: everything but the output location.
pub(crate) fn embedded<T: Serialize>(config: &T) -> Value {
    let mut value = serde_json::to_value(config).expect("config serializes");
    if let Some(map) = value.as_object_mut() {
        map.remove("output_dir");
    }
    value
}

/// True for the halts that mark a numerical singularity of the flow.
pub fn is_numerical_halt(e: &Error) -> bool {
    matches!(e, Error::SingularMetric { .. } | Error::NonFinite { .. })
}

pub(crate) fn halt_json(result: &RunResult) -> Value {
    match &result.halt {
        None => Value::Null,
        Some(e) => json!({
            "numerical": is_numerical_halt(e),
            "message": e.to_string(),
            "halt_time": result.halt_time,
            "last_recorded_time": result.trajectory.last().map(|s| s.time()),
        }),
    }
}

pub(crate) fn generate(spec: &graphflow_core::initdata::GeneratorSpec) -> CliResult<State> {
    spec.generate()
        .map_err(|e| CliError::Usage(format!("generator: {e}")))
}

pub(crate) fn flow(init: State, cfg: &FlowConfig) -> CliResult<RunResult> {
    run(init, cfg).map_err(|e| CliError::Usage(format!("flow: {e}")))
}

/// Flows the configured data, evaluates the monitors and writes
/// `series.csv`, `snapshot_<k>.csv`, one CSV per monitor and `report.json`.
pub fn cmd_run(config: &RunConfig, out: &Path) -> CliResult<Outcome> {
    config.validate()?;
    let init = generate(&config.generator)?;
    let recorded = embedded(config);
    let writer = ArtifactWriter::create(out, &config.formats, &recorded, config.generator.seed())?;

    let result = flow(init, &config.flow)?;
    let traj = &result.trajectory;
    writer.series(traj)?;
    let snapshot_times = writer.snapshots(traj)?;

    let outcomes = evaluate_all(&config.monitors, traj);
    for (stem, o) in file_stems(&outcomes).iter().zip(&outcomes) {
        writer.monitor(stem, &o.report)?;
    }
    let outcome = if result.halt.is_some() {
        Outcome::NumericalHalt
    } else if outcomes.iter().any(|o| o.failed()) {
        Outcome::Violation
    } else {
        Outcome::Pass
    };
    let report = merged(
        report_header(
            "run",
            &recorded,
            Some(&config.generator),
            config.generator.seed(),
        ),
        json!({
            "halt": halt_json(&result),
            "final_time": traj.last().map(|s| s.time()),
            "snapshot_times": snapshot_times,
            "monitors": outcomes,
            "exit_code": outcome.code(),
        }),
    );
    writer.json("report.json", &report)?;
    Ok(outcome)
}

/// Run to `2 t_rec` recording `t_rec` with stencil neighbors.
fn bracketed(init: State, t_rec: f64) -> CliResult<RunResult> {
    let mut cfg = FlowConfig::new(2.0 * t_rec);
    cfg.record_times = vec![t_rec];
    cfg.stencil = true;
    cfg.diagnostics = vec!["max_A2".into()];
    flow(init, &cfg)
}

#[derive(Debug, Serialize)]
struct IdentityRow {
    identity: IdentityName,
    points: usize,
    spacing: f64,
    report: EstimateReport,
}

#[derive(Debug, Serialize)]
struct IdentitySummary {
    identity: IdentityName,
    status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    study: Option<ConvergenceStudy>,
    /// Worst relative gap between the singular-value and frame forms of the RHS.
    #[serde(skip_serializing_if = "Option::is_none")]
    algebraic_max_relative_gap: Option<f64>,
}

fn identity_label(id: IdentityName) -> String {
    serde_json::to_value(id)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn residual(
    id: IdentityName,
    traj: &Trajectory,
    state: &State,
    plane: &[DVector<f64>],
    form: Option<&graphflow_core::AveragedForm>,
) -> graphflow_core::Result<EstimateReport> {
    match id {
        IdentityName::StarOmega => residual_star_omega(
            traj,
            &ConstantNForm::base(state.intrinsic_dim(), state.ambient_dim()),
        ),
        IdentityName::PositionNorm => residual_position_norm(traj),
        IdentityName::PlaneDistance => residual_plane_distance(traj, plane),
        IdentityName::StarOmegaSv => residual_star_omega_sv(traj),
        IdentityName::StarOmegaGeneral => {
            residual_star_omega_general(traj, form.expect("validated: general identity has a form"))
        }
    }
}

/// Refinement study of each identity over the configured grid levels.
pub fn cmd_verify_identities(config: &IdentityConfig, out: &Path) -> CliResult<Outcome> {
    config.validate()?;
    let finest = generate(
        &config
            .generator
            .with_points(*config.levels.last().expect("3 levels")),
    )?;
    let plane: Vec<DVector<f64>> = match &config.plane {
        Some(vectors) => vectors
            .iter()
            .map(|v| DVector::from_column_slice(v))
            .collect(),
        None => (0..finest.intrinsic_dim())
            .map(|a| DVector::from_fn(finest.ambient_dim(), |i, _| if i == a { 1.0 } else { 0.0 }))
            .collect(),
    };
    let averaged = match (
        &config.form,
        config.identities.contains(&IdentityName::StarOmegaGeneral),
    ) {
        (Some(spec), true) => {
            Some(build_form(spec, &finest).map_err(|e| CliError::Usage(format!("form: {e}")))?)
        }
        _ => None,
    };
    let recorded = embedded(config);
    let writer = ArtifactWriter::create(out, &config.formats, &recorded, config.generator.seed())?;

    let mut rows: Vec<IdentityRow> = Vec::new();
    let mut halt = Value::Null;
    for &points in &config.levels {
        let init = generate(&config.generator.with_points(points))?;
        let spacing = init.lattice().min_spacing();
        let result = bracketed(init, config.t_rec)?;
        if result.halt.is_some() {
            halt = halt_json(&result);
            break;
        }
        let traj = &result.trajectory;
        let state = traj.initial().expect("nonempty trajectory");
        for &id in &config.identities {
            let report = residual(id, traj, state, &plane, averaged.as_ref().map(|a| &a.0))
                .unwrap_or_else(|e| EstimateReport::aborted(&identity_label(id), e.to_string()));
            rows.push(IdentityRow {
                identity: id,
                points,
                spacing,
                report,
            });
        }
    }

    let mut summaries = Vec::new();
    for &id in &config.identities {
        let level_rows: Vec<&IdentityRow> = rows.iter().filter(|r| r.identity == id).collect();
        let label = identity_label(id);
        if level_rows
            .iter()
            .any(|r| r.report.status == Status::NotApplicable)
        {
            summaries.push(IdentitySummary {
                identity: id,
                status: Status::NotApplicable,
                study: None,
                algebraic_max_relative_gap: None,
            });
            continue;
        }
        let study = ConvergenceStudy::new(
            &label,
            level_rows.iter().map(|r| r.spacing).collect(),
            level_rows
                .iter()
                .map(|r| r.report.max_abs_residual)
                .collect(),
            config.required_order,
        );
        let mut passed = study.passed && level_rows.iter().all(|r| r.report.passed());
        let gap = (id == IdentityName::StarOmegaSv).then(|| {
            level_rows
                .iter()
                .filter_map(|r| r.report.extras.get("algebraic_max_relative_gap").copied())
                .fold(0.0, f64::max)
        });
        passed &= level_rows.len() == config.levels.len();
        summaries.push(IdentitySummary {
            identity: id,
            status: if passed { Status::Pass } else { Status::Fail },
            study: Some(study),
            algebraic_max_relative_gap: gap,
        });
    }

    let mut table = String::from("identity,points,spacing,max_abs_residual,status\n");
    for r in &rows {
        table.push_str(&format!(
            "{},{},{:e},{:e},{}\n",
            identity_label(r.identity),
            r.points,
            r.spacing,
            r.report.max_abs_residual,
            serde_json::to_value(r.report.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default()
        ));
    }
    writer.csv("convergence.csv", &table)?;

    let outcome = if !halt.is_null() {
        Outcome::NumericalHalt
    } else if summaries.iter().any(|s| s.status == Status::Fail) {
        Outcome::Violation
    } else {
        Outcome::Pass
    };
    let report = merged(
        report_header(
            "verify-identities",
            &recorded,
            Some(&config.generator),
            config.generator.seed(),
        ),
        json!({
            "halt": halt,
            "identities": summaries,
            "levels": rows,
            "pipeline": averaged.as_ref().map(|a| &a.1),
            "exit_code": outcome.code(),
        }),
    );
    writer.json("report.json", &report)?;
    Ok(outcome)
}
