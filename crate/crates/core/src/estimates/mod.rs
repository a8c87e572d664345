//! Residuals of the evolution identities and checks of the maximum-principle
//! estimates along recorded trajectories, reported as [`EstimateReport`]s.

mod hausdorff;
mod heat;
mod identities;
mod monitors;

pub use hausdorff::{directed_hausdorff, directed_hausdorff_by, hausdorff};
pub use heat::{centered_weights, heat_operator, FieldFn, HeatData};
pub use identities::{
    adapted_frames, general_form_rhs, residual_plane_distance, residual_position_norm,
    residual_star_omega, residual_star_omega_general, residual_star_omega_sv, singular_value_rhs,
    star_omega_bracket, star_omega_rhs, AdaptedFrames, SV_TIE_TOLERANCE,
};
pub use monitors::{
    averaged_form_barrier, curvature_growth, curvature_scaling, localized_star_omega_bound,
    max_sample_gap, star_omega_monotonicity, tubular_check, LocalizationBall, RadiusChoice,
    ScalingWeight, MONOTONICITY_SLACK,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Outcome of one monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// The monitor does not apply to this trajectory.
    NotApplicable,
    /// A precondition failed, so nothing was asserted.
    Aborted,
    /// Values were measured and reported without an assertion.
    Reported,
}

/// One row of a monitor's time series: `margin = bound − value` for upper
/// bounds and `value − bound` for lower bounds, so a negative margin is a violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub monitor: String,
    pub status: Status,
    pub max_abs_residual: f64,
    pub violation_count: usize,
    pub tolerance_used: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub convergence_order: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fitted_constant: Option<f64>,
    pub series: Vec<SeriesPoint>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub extras: BTreeMap<String, f64>,
}

impl EstimateReport {
    pub fn new(monitor: &str) -> Self {
        Self {
            monitor: monitor.to_string(),
            status: Status::Reported,
            max_abs_residual: 0.0,
            violation_count: 0,
            tolerance_used: 0.0,
            convergence_order: None,
            fitted_constant: None,
            series: Vec::new(),
            notes: Vec::new(),
            extras: BTreeMap::new(),
        }
    }

    pub fn not_applicable(monitor: &str, reason: &str) -> Self {
        let mut r = Self::new(monitor);
        r.status = Status::NotApplicable;
        r.notes.push(reason.to_string());
        r
    }

    pub fn aborted(monitor: &str, reason: String) -> Self {
        let mut r = Self::new(monitor);
        r.status = Status::Aborted;
        r.notes.push(reason);
        r
    }

    /// True unless an assertion failed or a precondition was lost.
    pub fn passed(&self) -> bool {
        !matches!(self.status, Status::Fail | Status::Aborted)
    }

    pub fn extra(&mut self, key: &str, value: f64) {
        self.extras.insert(key.to_string(), value);
    }

    pub fn series_csv(&self) -> String {
        let mut out = String::from("t,value,bound,margin\n");
        for p in &self.series {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e}\n",
                p.t, p.value, p.bound, p.margin
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Least-squares slope of `ln r` against `ln h`; needs at least three levels
/// with positive residuals.
pub fn fit_order(h: &[f64], residual: &[f64]) -> Option<f64> {
    if h.len() != residual.len() || h.len() < 3 {
        return None;
    }
    if h.iter()
        .chain(residual)
        .any(|v| !(*v > 0.0 && v.is_finite()))
    {
        return None;
    }
    log_log_slope(h, residual)
}

/// Least-squares slope of `ln y` against `ln x` over points with `x, y > 0`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Residual reports of one identity across grid levels, with the fitted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub identity: String,
    pub spacing: Vec<f64>,
    pub residual: Vec<f64>,
    pub order: Option<f64>,
    pub required_order: f64,
    pub passed: bool,
}

impl ConvergenceStudy {
    pub fn new(identity: &str, spacing: Vec<f64>, residual: Vec<f64>, required_order: f64) -> Self {
        let order = fit_order(&spacing, &residual);
        let passed = order.is_some_and(|p| p >= required_order);
        Self {
            identity: identity.to_string(),
            spacing,
            residual,
            order,
            required_order,
            passed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_of_exact_power_law() {
        let h = [0.1, 0.05, 0.025];
        let r: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        assert!((fit_order(&h, &r).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn order_needs_three_levels() {
        assert!(fit_order(&[0.1, 0.05], &[1.0, 0.25]).is_none());
        assert!(fit_order(&[0.1, 0.05, 0.025], &[1.0, 0.0, 0.1]).is_none());
    }

    #[test]
    fn study_pass_flag() {
        let s = ConvergenceStudy::new("x", vec![0.1, 0.05, 0.025], vec![0.1, 0.05, 0.025], 1.7);
        assert!(!s.passed);
        let s = ConvergenceStudy::new(
            "x",
            vec![0.1, 0.05, 0.025],
            vec![0.01, 0.0025, 0.000625],
            1.7,
        );
        assert!(s.passed);
    }

    #[test]
    fn report_round_trips_through_json() {
        let mut r = EstimateReport::new("m");
        r.series.push(SeriesPoint {
            t: 0.1,
            value: 1.0,
            bound: 2.0,
            margin: 1.0,
        });
        r.extra("k", 0.5);
        let back: EstimateReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(r.series_csv().starts_with("t,value,bound,margin\n"));
    }
}
