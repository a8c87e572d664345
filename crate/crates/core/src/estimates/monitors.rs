//! Maximum-principle monitors: monotonicity of `*Ω`, the localized bound on
//! `1/*Ω`, the tubular neighborhood, curvature scaling, the averaged-form
//! barrier and the one-sided `|A|²` inequality.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hausdorff::directed_hausdorff_by;
use super::heat::{heat_operator, FieldFn};
use super::identities::star_omega_rhs;
use super::{log_log_slope, EstimateReport, SeriesPoint, Status};
use crate::error::{Error, Result};
use crate::flow::{State, Trajectory};
use crate::forms::{AveragedForm, ConstantNForm, ConstantPipeline, SurfaceSamples};
use crate::geometry::{sample_all, GeometrySample, Surface};

/// Additive slack per recorded step for monotonicity assertions.
pub const MONOTONICITY_SLACK: f64 = 1e-8;

/// Relative slack of the localized bound on `1/*Ω`.
const LOCALIZED_SLACK: f64 = 1e-6;

/// Factor applied to the same-run identity residual to obtain `tol_h`.
const TOLERANCE_FACTOR: f64 = 3.0;

/// How the localizing radius function `r` is computed from a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusChoice {
    /// `r = |F − y₀|² + 2nt`.
    #[default]
    AmbientDistance,
    /// `r = |F − y₀|² − u²`, with `u` the distance of `F − y₀` from the base plane
    /// spanned by the first `n` ambient axes.
    PlaneProjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationBall {
    pub y0: Vec<f64>,
    pub radius: f64,
    pub theta: f64,
    #[serde(default)]
    pub r_choice: RadiusChoice,
}

impl LocalizationBall {
    pub fn validate(&self, ambient: usize) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "ball radius {} must be positive",
                self.radius
            )));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "theta {} not in (0, 1)",
                self.theta
            )));
        }
        if self.y0.len() != ambient {
            return Err(Error::InvalidArgument(format!(
                "ball center has {} components, ambient dimension is {ambient}",
                self.y0.len()
            )));
        }
        Ok(())
    }

    /// Value of the radius function at point `index` of `state`.
    pub fn r(&self, state: &State, index: usize) -> f64 {
        let n = state.intrinsic_dim();
        let d = state.displacement(&self.y0, &state.point(index));
        let d2: f64 = d.iter().map(|x| x * x).sum();
        match self.r_choice {
            RadiusChoice::AmbientDistance => d2 + 2.0 * n as f64 * state.time(),
            RadiusChoice::PlaneProjection => d2 - d[n..].iter().map(|x| x * x).sum::<f64>(),
        }
    }
}

/// The positive function `P` in the curvature scaling monitor.
#[derive(Debug, Clone, Copy)]
pub enum ScalingWeight<'a> {
    /// `P = *Ω` for the base form.
    BaseStarOmega,
    /// `P = *Ω_avg + c₇t − K` for an averaged form.
    Barrier {
        form: &'a AveragedForm,
        c7: f64,
        k: f64,
    },
}

fn included(state: &State) -> Vec<usize> {
    (0..state.len()).filter(|&i| state.included(i)).collect()
}

fn base_form(state: &State) -> ConstantNForm {
    ConstantNForm::base(state.intrinsic_dim(), state.ambient_dim())
}

/// Largest distance between lattice neighbors among included points.
pub fn max_sample_gap(state: &State) -> f64 {
    let lat = state.lattice();
    (0..state.len())
        .into_par_iter()
        .filter(|&i| state.included(i))
        .map(|i| {
            let p = state.point(i);
            (0..lat.dim())
                .map(|a| lat.shift(i, a, 1))
                .filter(|&j| state.included(j))
                .map(|j| state.distance(&p, &state.point(j)))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

fn min_star_omega(state: &State, form: &ConstantNForm) -> Result<f64> {
    let samples = sample_all(state)?;
    Ok(included(state)
        .into_iter()
        .map(|i| samples[i].star_omega(form))
        .fold(f64::INFINITY, f64::min))
}

fn precondition_report(monitor: &str, time: f64, value: f64) -> EstimateReport {
    EstimateReport::aborted(
        monitor,
        Error::PreconditionLost(format!("min *Ω = {value} ≤ 1/√2 at t = {time}")).to_string(),
    )
}

/// Lower bound `(d/dt − Δ)*Ω ≥ (2 − 1/*Ω²)|A|² − tol_h` at every derivative
/// point, and `min *Ω` nondecreasing in recorded time. `tol_h` is three times
/// the `*Ω` identity residual measured in the same pass.
pub fn star_omega_monotonicity(traj: &Trajectory) -> Result<EstimateReport> {
    const NAME: &str = "star_omega_monotonicity";
    let Some(initial) = traj.initial() else {
        return Err(Error::InsufficientSnapshots {
            needed: 1,
            found: 0,
        });
    };
    if !initial.is_graph() {
        return Ok(EstimateReport::not_applicable(
            NAME,
            "requires a graph trajectory",
        ));
    }
    let form = base_form(initial);
    let threshold = std::f64::consts::FRAC_1_SQRT_2;
    let mut minima = Vec::with_capacity(traj.len());
    for snap in &traj.snapshots {
        let m = min_star_omega(&snap.state, &form)?;
        if m <= threshold {
            return Ok(precondition_report(NAME, snap.time(), m));
        }
        minima.push(m);
    }

    let mut report = EstimateReport::new(NAME);
    report.status = Status::Pass;
    let mut step_violations = 0;
    for (k, snap) in traj.snapshots.iter().enumerate() {
        let bound = if k == 0 {
            minima[0]
        } else {
            minima[k - 1] - MONOTONICITY_SLACK
        };
        let margin = minima[k] - bound;
        if margin < 0.0 {
            step_violations += 1;
        }
        report.series.push(SeriesPoint {
            t: snap.time(),
            value: minima[k],
            bound,
            margin,
        });
    }

    let field =
        |_: &State, _: usize, s: &GeometrySample| -> Result<f64> { Ok(s.star_omega(&form)) };
    let mut residual: f64 = 0.0;
    let mut gaps = Vec::new();
    for k in traj.derivative_points() {
        let state = &traj.snapshots[k].state;
        let heat = heat_operator(traj, k, &[&field as &FieldFn])?;
        let per_point = included(state)
            .into_par_iter()
            .map(|i| {
                let s = &heat.samples[i];
                let f = s.frames()?;
                let rhs = star_omega_rhs(&form, &f, &s.h_components(&f));
                let star = heat.values[0][i];
                let lower = (2.0 - 1.0 / (star * star)) * s.a_norm2();
                Ok(((heat.lhs[0][i] - rhs).abs(), heat.lhs[0][i] - lower))
            })
            .collect::<Result<Vec<_>>>()?;
        for (r, gap) in per_point {
            residual = residual.max(r);
            gaps.push(gap);
        }
    }
    let tol = TOLERANCE_FACTOR * residual;
    let pointwise_violations = gaps.iter().filter(|g| **g < -tol).count();
    if traj.derivative_points().is_empty() {
        report
            .notes
            .push("no derivative points; pointwise inequality not evaluated".into());
    }
    report.tolerance_used = tol;
    report.max_abs_residual = residual;
    report.violation_count = step_violations + pointwise_violations;
    report.extra("step_violations", step_violations as f64);
    report.extra("pointwise_violations", pointwise_violations as f64);
    report.extra("pointwise_points", gaps.len() as f64);
    report.extra(
        "min_pointwise_margin",
        gaps.iter().copied().fold(f64::INFINITY, f64::min),
    );
    report.extra("min_star_omega_initial", minima[0]);
    report.extra(
        "min_star_omega_final",
        *minima.last().expect("nonempty trajectory"),
    );
    if report.violation_count > 0 {
        report.status = Status::Fail;
    }
    Ok(report)
}

/// `v φ₊ ≤ sup_{Σ₀} v φ₊ (1 + 10⁻⁶)` with `v = 1/*Ω` and
/// `φ = R² − |F − y₀|² − 2nt`, evaluated at grid points.
pub fn localized_star_omega_bound(
    traj: &Trajectory,
    ball: &LocalizationBall,
) -> Result<EstimateReport> {
    const NAME: &str = "localized_star_omega_bound";
    let Some(initial) = traj.initial() else {
        return Err(Error::InsufficientSnapshots {
            needed: 1,
            found: 0,
        });
    };
    ball.validate(initial.ambient_dim())?;
    let form = base_form(initial);
    let n = initial.intrinsic_dim() as f64;
    let r2 = ball.radius * ball.radius;
    let mut sups = Vec::with_capacity(traj.len());
    for snap in &traj.snapshots {
        let state = &snap.state;
        let t = state.time();
        let samples = sample_all(state)?;
        let mut min_star = f64::INFINITY;
        let mut sup: f64 = 0.0;
        for i in included(state) {
            let star = samples[i].star_omega(&form);
            min_star = min_star.min(star);
            let d = state.displacement(&ball.y0, &state.point(i));
            let phi = r2 - d.iter().map(|x| x * x).sum::<f64>() - 2.0 * n * t;
            if phi > 0.0 {
                sup = sup.max(phi / star);
            }
        }
        if min_star <= std::f64::consts::FRAC_1_SQRT_2 {
            return Ok(precondition_report(NAME, t, min_star));
        }
        sups.push((t, sup));
    }
    let initial_sup = sups[0].1;
    let bound = initial_sup * (1.0 + LOCALIZED_SLACK);
    let mut report = EstimateReport::new(NAME);
    report.tolerance_used = LOCALIZED_SLACK * initial_sup;
    for &(t, value) in &sups {
        if value > bound {
            report.violation_count += 1;
        }
        report.series.push(SeriesPoint {
            t,
            value,
            bound,
            margin: bound - value,
        });
        report.max_abs_residual = report.max_abs_residual.max(value - initial_sup);
    }
    if let Some(&(t, _)) = sups.iter().find(|(t, _)| r2 < 2.0 * n * t) {
        report
            .notes
            .push(format!("window closed at t = {t}: φ₊ ≡ 0 from here on"));
    }
    report.extra("initial_sup", initial_sup);
    report.status = if report.violation_count == 0 {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(report)
}

/// Directed Hausdorff distance from `Σ_t` to `Σ₀` against `√(2nt)` plus the
/// largest initial sample gap.
pub fn tubular_check(traj: &Trajectory) -> Result<EstimateReport> {
    let Some(initial) = traj.initial() else {
        return Err(Error::InsufficientSnapshots {
            needed: 1,
            found: 0,
        });
    };
    let n = initial.intrinsic_dim() as f64;
    let gap = max_sample_gap(initial);
    let cloud = |s: &State| {
        included(s)
            .into_iter()
            .map(|i| s.point(i))
            .collect::<Vec<_>>()
    };
    let reference = cloud(initial);
    let mut report = EstimateReport::new("tubular_check");
    report.tolerance_used = gap;
    for snap in &traj.snapshots {
        let state = &snap.state;
        let t = state.time();
        let d = directed_hausdorff_by(&cloud(state), &reference, |a, b| state.distance(a, b))?;
        let bound = (2.0 * n * t).sqrt() + gap;
        if d > bound {
            report.violation_count += 1;
        }
        report.series.push(SeriesPoint {
            t,
            value: d,
            bound,
            margin: bound - d,
        });
    }
    report.status = if report.violation_count == 0 {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(report)
}

fn weight_values(
    state: &State,
    samples: &[GeometrySample],
    weight: &ScalingWeight,
) -> Result<Vec<f64>> {
    match weight {
        ScalingWeight::BaseStarOmega => {
            let form = base_form(state);
            Ok(samples.iter().map(|s| s.star_omega(&form)).collect())
        }
        ScalingWeight::Barrier { form, c7, k } => (0..state.len())
            .into_par_iter()
            .map(|i| {
                let f = samples[i].frames()?;
                let star = form.star_omega_at(&DVector::from_vec(state.point(i)), &f.tangent)?;
                Ok(star + c7 * state.time() - k)
            })
            .collect(),
    }
}

/// `s(t) = sup_{r ≤ θR²} |A|² (1−θ)² / ((1/t + 1/R²) · sup_{[0,t]} sup_{r ≤ R²} P⁻⁴)`.
///
/// Reports `max s` as the fitted constant and passes when every `s` is finite
/// and the log-log slope of `s` over the final decade of recorded times is at
/// most 0.1. When `slope_window` is given, the log-log slope of the θ-ball
/// supremum of `|A|²` over that time window is reported as `a2_slope`.
pub fn curvature_scaling(
    traj: &Trajectory,
    ball: &LocalizationBall,
    weight: &ScalingWeight,
    slope_window: Option<(f64, f64)>,
) -> Result<EstimateReport> {
    let Some(initial) = traj.initial() else {
        return Err(Error::InsufficientSnapshots {
            needed: 1,
            found: 0,
        });
    };
    ball.validate(initial.ambient_dim())?;
    let r2 = ball.radius * ball.radius;
    let inner = ball.theta * r2;
    let scale = (1.0 - ball.theta).powi(2);
    let mut report = EstimateReport::new("curvature_scaling");
    let mut running_inv_p4: f64 = 0.0;
    let mut nonpositive = None;
    let mut closed = None;
    let mut rows = Vec::new();
    for snap in &traj.snapshots {
        let state = &snap.state;
        let t = state.time();
        let samples = sample_all(state)?;
        let p = weight_values(state, &samples, weight)?;
        let mut sup_a2 = f64::NEG_INFINITY;
        for i in included(state) {
            let r = ball.r(state, i);
            if r <= r2 {
                if p[i] <= 0.0 {
                    nonpositive.get_or_insert((t, i));
                } else {
                    running_inv_p4 = running_inv_p4.max(p[i].powi(-4));
                }
            }
            if r <= inner {
                sup_a2 = sup_a2.max(samples[i].a_norm2());
            }
        }
        if t <= 0.0 {
            continue;
        }
        if sup_a2 == f64::NEG_INFINITY {
            closed.get_or_insert(t);
            continue;
        }
        let s = sup_a2 * scale / ((1.0 / t + 1.0 / r2) * running_inv_p4);
        rows.push((t, sup_a2, s));
    }
    if rows.is_empty() {
        return Err(Error::WindowClosed(closed.unwrap_or(0.0)));
    }
    if let Some(t) = closed {
        report.notes.push(Error::WindowClosed(t).to_string());
    }
    let c0 = rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    for &(t, _, s) in &rows {
        report.series.push(SeriesPoint {
            t,
            value: s,
            bound: c0,
            margin: c0 - s,
        });
    }
    report.fitted_constant = Some(c0);

    let t_last = rows.last().expect("nonempty").0;
    let decade: Vec<_> = rows.iter().filter(|r| r.0 >= t_last / 10.0).collect();
    let tail_slope = log_log_slope(
        &decade.iter().map(|r| r.0).collect::<Vec<_>>(),
        &decade.iter().map(|r| r.2).collect::<Vec<_>>(),
    );
    let finite = rows.iter().all(|r| r.2.is_finite()) && c0.is_finite();
    let mut failed = !finite;
    match tail_slope {
        Some(slope) => {
            report.extra("final_decade_slope", slope);
            failed |= slope > 0.1;
        }
        None => report
            .notes
            .push("fewer than two times in the final decade; trend not evaluated".into()),
    }
    if let Some((t, i)) = nonpositive {
        report
            .notes
            .push(format!("weight P ≤ 0 at t = {t}, point {i}"));
        failed = true;
    }
    if let Some((lo, hi)) = slope_window {
        let window: Vec<_> = rows.iter().filter(|r| r.0 >= lo && r.0 <= hi).collect();
        if let Some(slope) = log_log_slope(
            &window.iter().map(|r| r.0).collect::<Vec<_>>(),
            &window.iter().map(|r| r.1).collect::<Vec<_>>(),
        ) {
            report.extra("a2_slope", slope);
            report.extra("a2_slope_window_lo", lo);
            report.extra("a2_slope_window_hi", hi);
        }
    }
    if failed {
        report.violation_count = 1;
    }
    report.status = if failed { Status::Fail } else { Status::Pass };
    Ok(report)
}

/// `min (*Ω_avg + c₇t) > K` for recorded `t ≤ t₁`, and
/// `(*Ω_avg − c₈√(1−K₀²) − ε) / (*Ω_avg + c₇t − K) > 5` wherever the
/// denominator is positive. Refuses to run unless the initial samples pass
/// the K condition.
pub fn averaged_form_barrier(
    traj: &Trajectory,
    form: &AveragedForm,
    pipeline: &ConstantPipeline,
) -> Result<EstimateReport> {
    let Some(initial) = traj.initial() else {
        return Err(Error::InsufficientSnapshots {
            needed: 1,
            found: 0,
        });
    };
    let samples0 = SurfaceSamples::from_surface(initial)?;
    let kcheck = form.check_k_condition(&samples0, pipeline.k)?;
    if !kcheck.passed {
        return Err(Error::PreconditionLost(format!(
            "initial data fails the K condition: min *Ω = {} ≤ K = {}",
            kcheck.min_star_omega, pipeline.k
        )));
    }
    let offplane = pipeline.c8 * (1.0 - pipeline.k0 * pipeline.k0).sqrt() + pipeline.epsilon;
    let mut report = EstimateReport::new("averaged_form_barrier");
    report.tolerance_used = MONOTONICITY_SLACK;
    let mut first_violation: Option<(f64, usize, String)> = None;
    let mut min_ratio = f64::INFINITY;
    let mut skipped = 0;
    for snap in &traj.snapshots {
        let state = &snap.state;
        let t = state.time();
        if t > pipeline.t1 * (1.0 + 1e-12) {
            skipped += 1;
            continue;
        }
        let samples = sample_all(state)?;
        let star = weight_values(
            state,
            &samples,
            &ScalingWeight::Barrier {
                form,
                c7: 0.0,
                k: 0.0,
            },
        )?;
        let mut min_value = f64::INFINITY;
        for i in included(state) {
            let value = star[i] + pipeline.c7 * t;
            min_value = min_value.min(value);
            if value <= pipeline.k - MONOTONICITY_SLACK {
                report.violation_count += 1;
                first_violation.get_or_insert((
                    t,
                    i,
                    format!("*Ω + c₇t = {value} ≤ K = {}", pipeline.k),
                ));
            }
            let den = value - pipeline.k;
            if den > 0.0 {
                let ratio = (star[i] - offplane) / den;
                min_ratio = min_ratio.min(ratio);
                if ratio <= 5.0 {
                    report.violation_count += 1;
                    first_violation.get_or_insert((t, i, format!("ratio {ratio} ≤ 5")));
                }
            }
        }
        report.series.push(SeriesPoint {
            t,
            value: min_value,
            bound: pipeline.k,
            margin: min_value - pipeline.k,
        });
    }
    report.extra("min_ratio", min_ratio);
    report.extra("k", pipeline.k);
    report.extra("t1", pipeline.t1);
    report.extra("initial_min_star_omega", kcheck.min_star_omega);
    if skipped > 0 {
        report.notes.push(format!(
            "{skipped} snapshots after t₁ = {} not checked",
            pipeline.t1
        ));
    }
    report.status = match first_violation {
        Some((time, index, detail)) => {
            report.notes.push(
                Error::ConditionViolated {
                    time,
                    index,
                    detail,
                }
                .to_string(),
            );
            Status::Fail
        }
        None => Status::Pass,
    };
    Ok(report)
}

/// `(d/dt − Δ)|A|² ≤ 10|A|⁴ + tol_h` at every derivative point, with `tol_h`
/// three times the base-form `*Ω` identity residual of the same pass.
pub fn curvature_growth(traj: &Trajectory) -> Result<EstimateReport> {
    let points = traj.derivative_points();
    if points.is_empty() {
        return Err(Error::InsufficientSnapshots {
            needed: 3,
            found: traj.len(),
        });
    }
    let form = base_form(traj.initial().expect("nonempty trajectory"));
    let a2 = |_: &State, _: usize, s: &GeometrySample| -> Result<f64> { Ok(s.a_norm2()) };
    let star = |_: &State, _: usize, s: &GeometrySample| -> Result<f64> { Ok(s.star_omega(&form)) };
    let mut residual: f64 = 0.0;
    let mut excess = Vec::new();
    let mut report = EstimateReport::new("curvature_growth");
    for k in points {
        let state = &traj.snapshots[k].state;
        let heat = heat_operator(traj, k, &[&a2 as &FieldFn, &star])?;
        let per_point = included(state)
            .into_par_iter()
            .map(|i| {
                let s = &heat.samples[i];
                let f = s.frames()?;
                let rhs = star_omega_rhs(&form, &f, &s.h_components(&f));
                let a = heat.values[0][i];
                Ok(((heat.lhs[1][i] - rhs).abs(), heat.lhs[0][i], 10.0 * a * a))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut worst = f64::NEG_INFINITY;
        let mut worst_bound = 0.0;
        for (r, lhs, bound) in per_point {
            residual = residual.max(r);
            excess.push(lhs - bound);
            if lhs - bound > worst {
                worst = lhs - bound;
                worst_bound = bound;
            }
        }
        report.series.push(SeriesPoint {
            t: heat.time,
            value: worst + worst_bound,
            bound: worst_bound,
            margin: -worst,
        });
    }
    let tol = TOLERANCE_FACTOR * residual;
    report.tolerance_used = tol;
    report.max_abs_residual = residual;
    report.violation_count = excess.iter().filter(|e| **e > tol).count();
    report.extra(
        "max_excess",
        excess.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    report.status = if report.violation_count == 0 {
        Status::Pass
    } else {
        Status::Fail
    };
    Ok(report)
}
