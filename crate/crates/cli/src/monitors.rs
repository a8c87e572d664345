//! Evaluates configured monitors over a finished trajectory.

use graphflow_core::estimates::{
    averaged_form_barrier, curvature_growth, curvature_scaling, localized_star_omega_bound,
    residual_plane_distance, residual_position_norm, residual_star_omega,
    residual_star_omega_general, residual_star_omega_sv, star_omega_monotonicity, tubular_check,
    ScalingWeight,
};
use graphflow_core::forms::{compute_constants, select_centers, CutoffProfile, SurfaceSamples};
use graphflow_core::{
    AveragedForm, ConstantNForm, ConstantPipeline, EstimateReport, Result, State, Surface,
    Trajectory,
};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FormSpec, MonitorKind, MonitorSpec, WeightSpec};

/// Averaged form over the initial data and its constant chain.
pub fn build_form(spec: &FormSpec, state: &State) -> Result<(AveragedForm, ConstantPipeline)> {
    let samples = SurfaceSamples::from_surface(state)?;
    let form = select_centers(
        &samples,
        spec.r0,
        CutoffProfile::with_smoothstep(spec.smoothstep),
    )?;
    let bounds = form.local_bounds(&samples);
    let pipeline = compute_constants(
        state.intrinsic_dim(),
        state.codim(),
        spec.r0,
        &bounds,
        spec.epsilon,
    )?;
    Ok((form, pipeline))
}

/// The plane spanned by the first `n` ambient axes.
fn base_plane(state: &State) -> Vec<DVector<f64>> {
    let d = state.ambient_dim();
    (0..state.intrinsic_dim())
        .map(|a| DVector::from_fn(d, |i, _| if i == a { 1.0 } else { 0.0 }))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MonitorOutcome {
    pub name: &'static str,
    pub asserted: bool,
    pub report: EstimateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<ConstantPipeline>,
}

impl MonitorOutcome {
    /// An asserted monitor that failed or lost its precondition.
    pub fn failed(&self) -> bool {
        self.asserted && !self.report.passed()
    }
}

fn run_monitor(
    kind: &MonitorKind,
    traj: &Trajectory,
    initial: &State,
    pipeline: &mut Option<ConstantPipeline>,
) -> Result<EstimateReport> {
    match kind {
        MonitorKind::StarOmegaMonotonicity => star_omega_monotonicity(traj),
        MonitorKind::LocalizedStarOmegaBound { ball } => localized_star_omega_bound(traj, ball),
        MonitorKind::TubularCheck => tubular_check(traj),
        MonitorKind::CurvatureScaling {
            ball,
            weight,
            slope_window,
        } => {
            let window = slope_window.map(|[lo, hi]| (lo, hi));
            match weight {
                WeightSpec::BaseStarOmega => {
                    curvature_scaling(traj, ball, &ScalingWeight::BaseStarOmega, window)
                }
                WeightSpec::Barrier { form } => {
                    let (form, constants) = build_form(form, initial)?;
                    let weight = ScalingWeight::Barrier {
                        form: &form,
                        c7: constants.c7,
                        k: constants.k,
                    };
                    *pipeline = Some(constants);
                    curvature_scaling(traj, ball, &weight, window)
                }
            }
        }
        MonitorKind::AveragedFormBarrier { form } => {
            let (form, constants) = build_form(form, initial)?;
            let report = averaged_form_barrier(traj, &form, &constants);
            *pipeline = Some(constants);
            report
        }
        MonitorKind::CurvatureGrowth => curvature_growth(traj),
        MonitorKind::ResidualPositionNorm => residual_position_norm(traj),
        MonitorKind::ResidualPlaneDistance { plane } => {
            let plane = match plane {
                Some(vectors) => vectors
                    .iter()
                    .map(|v| DVector::from_column_slice(v))
                    .collect(),
                None => base_plane(initial),
            };
            residual_plane_distance(traj, &plane)
        }
        MonitorKind::ResidualStarOmega => residual_star_omega(
            traj,
            &ConstantNForm::base(initial.intrinsic_dim(), initial.ambient_dim()),
        ),
        MonitorKind::ResidualStarOmegaSv => residual_star_omega_sv(traj),
        MonitorKind::ResidualStarOmegaGeneral { form } => {
            let (form, constants) = build_form(form, initial)?;
            *pipeline = Some(constants);
            residual_star_omega_general(traj, &form)
        }
    }
}

/// Runs one monitor; errors become `Aborted` reports carrying the message.
pub fn evaluate(spec: &MonitorSpec, traj: &Trajectory) -> MonitorOutcome {
    let name = spec.kind.name();
    let mut pipeline = None;
    let report = match traj.initial() {
        Some(initial) => run_monitor(&spec.kind, traj, initial, &mut pipeline)
            .unwrap_or_else(|e| EstimateReport::aborted(name, e.to_string())),
        None => EstimateReport::aborted(name, "empty trajectory".into()),
    };
    MonitorOutcome {
        name,
        asserted: spec.assert,
        report,
        pipeline,
    }
}

/// Evaluates the monitors concurrently over the immutable trajectory.
pub fn evaluate_all(specs: &[MonitorSpec], traj: &Trajectory) -> Vec<MonitorOutcome> {
    specs.par_iter().map(|s| evaluate(s, traj)).collect()
}

/// CSV file stems: the monitor name, suffixed `_2`, `_3`, … on repeats.
pub fn file_stems(outcomes: &[MonitorOutcome]) -> Vec<String> {
    let mut seen: Vec<&str> = Vec::new();
    outcomes
        .iter()
        .map(|o| {
            seen.push(o.name);
            let count = seen.iter().filter(|n| **n == o.name).count();
            if count == 1 {
                o.name.to_string()
            } else {
                format!("{}_{count}", o.name)
            }
        })
        .collect()
}
