//! JSON config schemas for `run` and `verify-identities`.

use std::path::{Path, PathBuf};

use graphflow_core::estimates::LocalizationBall;
use graphflow_core::flow::FlowConfig;
use graphflow_core::forms::{EpsilonRule, Smoothstep};
use graphflow_core::initdata::GeneratorSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

/// Artifact formats to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn yes() -> bool {
    true
}

/// How to build an averaged form from the initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    pub r0: f64,
    #[serde(default)]
    pub smoothstep: Smoothstep,
    #[serde(default)]
    pub epsilon: EpsilonRule,
}

/// The positive weight `P` of the curvature scaling monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    #[default]
    BaseStarOmega,
    Barrier {
        form: FormSpec,
    },
}

/// A monitor and its parameters, selected by `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum MonitorKind {
    StarOmegaMonotonicity,
    LocalizedStarOmegaBound {
        ball: LocalizationBall,
    },
    TubularCheck,
    CurvatureScaling {
        ball: LocalizationBall,
        #[serde(default)]
        weight: WeightSpec,
        #[serde(default)]
        slope_window: Option<[f64; 2]>,
    },
    AveragedFormBarrier {
        form: FormSpec,
    },
    CurvatureGrowth,
    ResidualPositionNorm,
    ResidualPlaneDistance {
        /// Orthonormal spanning vectors; defaults to the first `n` ambient axes.
        #[serde(default)]
        plane: Option<Vec<Vec<f64>>>,
    },
    ResidualStarOmega,
    ResidualStarOmegaSv,
    ResidualStarOmegaGeneral {
        form: FormSpec,
    },
}

/// Names accepted in a monitor's `name` field.
pub const MONITOR_NAMES: [&str; 11] = [
    "star_omega_monotonicity",
    "localized_star_omega_bound",
    "tubular_check",
    "curvature_scaling",
    "averaged_form_barrier",
    "curvature_growth",
    "residual_position_norm",
    "residual_plane_distance",
    "residual_star_omega",
    "residual_star_omega_sv",
    "residual_star_omega_general",
];

impl MonitorKind {
    pub fn name(&self) -> &'static str {
        match self {
            MonitorKind::StarOmegaMonotonicity => MONITOR_NAMES[0],
            MonitorKind::LocalizedStarOmegaBound { .. } => MONITOR_NAMES[1],
            MonitorKind::TubularCheck => MONITOR_NAMES[2],
            MonitorKind::CurvatureScaling { .. } => MONITOR_NAMES[3],
            MonitorKind::AveragedFormBarrier { .. } => MONITOR_NAMES[4],
            MonitorKind::CurvatureGrowth => MONITOR_NAMES[5],
            MonitorKind::ResidualPositionNorm => MONITOR_NAMES[6],
            MonitorKind::ResidualPlaneDistance { .. } => MONITOR_NAMES[7],
            MonitorKind::ResidualStarOmega => MONITOR_NAMES[8],
            MonitorKind::ResidualStarOmegaSv => MONITOR_NAMES[9],
            MonitorKind::ResidualStarOmegaGeneral { .. } => MONITOR_NAMES[10],
        }
    }

    /// Monitors that take time derivatives at stencil-bracketed snapshots.
    pub fn needs_stencil(&self) -> bool {
        matches!(
            self,
            MonitorKind::StarOmegaMonotonicity
                | MonitorKind::CurvatureGrowth
                | MonitorKind::ResidualPositionNorm
                | MonitorKind::ResidualPlaneDistance { .. }
                | MonitorKind::ResidualStarOmega
                | MonitorKind::ResidualStarOmegaSv
                | MonitorKind::ResidualStarOmegaGeneral { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSpec {
    #[serde(flatten)]
    pub kind: MonitorKind,
    /// Whether a failure of this monitor fails the run.
    #[serde(default = "yes")]
    pub assert: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorSpec,
    pub flow: FlowConfig,
    #[serde(default)]
    pub monitors: Vec<MonitorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        self.flow
            .validate()
            .map_err(|e| CliError::Usage(format!("flow: {e}")))?;
        for spec in &self.monitors {
            if spec.kind.needs_stencil()
                && !(self.flow.stencil && !self.flow.record_times.is_empty())
            {
                return Err(CliError::Usage(format!(
                    "monitor {} needs flow.stencil = true and at least one flow.record_times entry",
                    spec.kind.name()
                )));
            }
        }
        validate_formats(&self.formats)
    }
}

fn validate_formats(formats: &[Format]) -> CliResult<()> {
    if formats.is_empty() {
        return Err(CliError::Usage(
            "formats must name csv, json or both".into(),
        ));
    }
    Ok(())
}

/// Identities available to `verify-identities`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityName {
    /// Heat equation of `*Ω` for the base-plane form.
    StarOmega,
    /// Heat equation of `|F|²`.
    PositionNorm,
    /// Heat equation of the squared distance to a plane through the origin.
    PlaneDistance,
    /// The singular-value form of the `*Ω` equation, checked algebraically.
    StarOmegaSv,
    /// Heat equation of `*Ω` for an averaged form.
    StarOmegaGeneral,
}

fn default_identities() -> Vec<IdentityName> {
    vec![
        IdentityName::StarOmega,
        IdentityName::PositionNorm,
        IdentityName::PlaneDistance,
    ]
}

fn default_t_rec() -> f64 {
    0.01
}

fn default_required_order() -> f64 {
    1.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityConfig {
    pub generator: GeneratorSpec,
    /// Points per axis at each refinement level.
    pub levels: Vec<usize>,
    #[serde(default = "default_identities")]
    pub identities: Vec<IdentityName>,
    /// Time of the residual evaluation; each level flows to twice this.
    #[serde(default = "default_t_rec")]
    pub t_rec: f64,
    #[serde(default = "default_required_order")]
    pub required_order: f64,
    #[serde(default)]
    pub plane: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub form: Option<FormSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

impl IdentityConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.levels.len() < 3 {
            return Err(CliError::Usage(format!(
                "a refinement study needs at least 3 grid levels, got {}",
                self.levels.len()
            )));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Usage("levels must be strictly increasing".into()));
        }
        if !self.generator.is_analytic() {
            return Err(CliError::Usage(
                "verify-identities needs grid-independent smooth data (not corner or Lawson–Osserman graphs)".into(),
            ));
        }
        if !(self.t_rec > 0.0 && self.t_rec.is_finite()) {
            return Err(CliError::Usage(format!(
                "t_rec = {} must be positive",
                self.t_rec
            )));
        }
        if self.identities.contains(&IdentityName::StarOmegaGeneral) && self.form.is_none() {
            return Err(CliError::Usage(
                "identity star_omega_general needs a form {r0, smoothstep, epsilon}".into(),
            ));
        }
        validate_formats(&self.formats)
    }
}

/// Reads and parses a JSON config.
pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text, path)
}

/// Parses a JSON config, naming unknown monitors explicitly.
pub fn parse<T: DeserializeOwned>(text: &str, path: &Path) -> CliResult<T> {
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(text) {
        if let Some(list) = value.get("monitors").and_then(|m| m.as_array()) {
            for entry in list {
                match entry.get("name").and_then(|n| n.as_str()) {
                    Some(name) if MONITOR_NAMES.contains(&name) => {}
                    Some(name) => {
                        return Err(CliError::Usage(format!(
                            "unknown monitor {name:?}; known monitors: {}",
                            MONITOR_NAMES.join(", ")
                        )))
                    }
                    None => return Err(CliError::Usage("monitor entry without a name".into())),
                }
            }
        }
    }
    serde_json::from_str(text).map_err(|source| CliError::ParseConfig {
        path: path.to_path_buf(),
        source,
    })
}
