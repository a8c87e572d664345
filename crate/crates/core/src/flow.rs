//! Explicit time integration of mean curvature flow, parametric
//! (`∂F/∂t = g^{ij} P ∂²_{ij}F`) and graphical (`∂f/∂t = g^{ij} ∂²_{ij}f`),
//! with stability control and trajectory recording.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::directed_hausdorff_by;
use crate::forms::ConstantNForm;
use crate::geometry::{
    sym_index, GeometrySample, GraphGrid, ImmersionGrid, Jet2, Lattice, Surface,
    DEGENERACY_THRESHOLD,
};

/// Largest intrinsic dimension handled by the fixed-size kernels.
const MAX_N: usize = 4;
/// Largest ambient dimension handled by the fixed-size kernels.
const MAX_AMBIENT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ExplicitEuler,
    #[default]
    Rk4,
}

/// Names of the per-snapshot series columns, in CSV order after `t`.
pub const SERIES_COLUMNS: [&str; 5] = [
    "min_star_omega",
    "max_A2",
    "max_H",
    "hausdorff_to_init",
    "min_delta",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    pub t_end: f64,
    /// Record a snapshot every this many steps; 0 records only `record_times` and `t_end`.
    #[serde(default)]
    pub record_every: usize,
    /// Times the integrator lands on exactly and records.
    #[serde(default)]
    pub record_times: Vec<f64>,
    /// Also record the steps just before and after every scheduled snapshot,
    /// so time derivatives there use step-sized differences.
    #[serde(default)]
    pub stencil: bool,
    /// Fixed step size; `None` uses [`stable_dt`] at every step.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Series columns to compute; empty computes all of [`SERIES_COLUMNS`].
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

fn default_cfl() -> f64 {
    0.5
}

impl FlowConfig {
    pub fn new(t_end: f64) -> Self {
        Self {
            scheme: Scheme::Rk4,
            cfl_safety: default_cfl(),
            t_end,
            record_every: 0,
            record_times: Vec::new(),
            stencil: false,
            dt: None,
            diagnostics: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cfl_safety {} not in (0, 1]",
                self.cfl_safety
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_end {} must be positive",
                self.t_end
            )));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
            }
        }
        if let Some(t) = self
            .record_times
            .iter()
            .find(|&&t| !(t > 0.0 && t <= self.t_end))
        {
            return Err(Error::InvalidArgument(format!(
                "record time {t} outside (0, t_end]"
            )));
        }
        if let Some(d) = self
            .diagnostics
            .iter()
            .find(|d| !SERIES_COLUMNS.contains(&d.as_str()))
        {
            return Err(Error::InvalidArgument(format!("unknown diagnostic '{d}'")));
        }
        Ok(())
    }

    fn wants(&self, column: &str) -> bool {
        self.diagnostics.is_empty() || self.diagnostics.iter().any(|d| d == column)
    }
}

/// A flow state in either representation.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Parametric(ImmersionGrid),
    Graph(GraphGrid),
}

impl State {
    pub fn surface(&self) -> &dyn Surface {
        match self {
            State::Parametric(g) => g,
            State::Graph(g) => g,
        }
    }

    /// Component arrays being evolved: `F` components or `f` components.
    pub fn fields(&self) -> &[Vec<f64>] {
        match self {
            State::Parametric(g) => &g.positions,
            State::Graph(g) => &g.values,
        }
    }

    fn with_fields(&self, fields: Vec<Vec<f64>>, time: f64) -> State {
        match self {
            State::Parametric(g) => State::Parametric(ImmersionGrid {
                lattice: g.lattice.clone(),
                codim: g.codim,
                positions: fields,
                time,
                mask: g.mask.clone(),
            }),
            State::Graph(g) => State::Graph(GraphGrid {
                lattice: g.lattice.clone(),
                values: fields,
                time,
            }),
        }
    }

    pub fn is_graph(&self) -> bool {
        matches!(self, State::Graph(_))
    }

    pub fn time(&self) -> f64 {
        self.surface().time()
    }

    fn set_time(&mut self, t: f64) {
        match self {
            State::Parametric(g) => g.time = t,
            State::Graph(g) => g.time = t,
        }
    }
}

impl From<ImmersionGrid> for State {
    fn from(g: ImmersionGrid) -> Self {
        State::Parametric(g)
    }
}

impl From<GraphGrid> for State {
    fn from(g: GraphGrid) -> Self {
        State::Graph(g)
    }
}

impl Surface for State {
    fn lattice(&self) -> &Lattice {
        self.surface().lattice()
    }

    fn codim(&self) -> usize {
        self.surface().codim()
    }

    fn time(&self) -> f64 {
        self.surface().time()
    }

    fn jet(&self, index: usize) -> Jet2 {
        self.surface().jet(index)
    }

    fn point(&self, index: usize) -> Vec<f64> {
        self.surface().point(index)
    }

    fn displacement(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        self.surface().displacement(from, to)
    }

    fn included(&self, index: usize) -> bool {
        self.surface().included(index)
    }
}

type Small = [[f64; MAX_N]; MAX_N];

/// Inverse and determinant of the leading `n × n` block, or `None` when the
/// determinant is at or below [`DEGENERACY_THRESHOLD`].
fn invert_small(g: &Small, n: usize) -> (Option<Small>, f64) {
    let mut inv = [[0.0; MAX_N]; MAX_N];
    match n {
        1 => {
            let det = g[0][0];
            if det <= DEGENERACY_THRESHOLD {
                return (None, det);
            }
            inv[0][0] = 1.0 / det;
            (Some(inv), det)
        }
        2 => {
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            if det <= DEGENERACY_THRESHOLD {
                return (None, det);
            }
            inv[0][0] = g[1][1] / det;
            inv[1][1] = g[0][0] / det;
            inv[0][1] = -g[0][1] / det;
            inv[1][0] = -g[1][0] / det;
            (Some(inv), det)
        }
        _ => {
            let mut a = *g;
            for (i, row) in inv.iter_mut().enumerate().take(n) {
                row[i] = 1.0;
            }
            let mut det = 1.0;
            for col in 0..n {
                let pivot = (col..n)
                    .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                    .unwrap_or(col);
                if a[pivot][col] == 0.0 {
                    return (None, 0.0);
                }
                if pivot != col {
                    a.swap(pivot, col);
                    inv.swap(pivot, col);
                    det = -det;
                }
                let p = a[col][col];
                det *= p;
                for k in 0..n {
                    a[col][k] /= p;
                    inv[col][k] /= p;
                }
                for r in 0..n {
                    if r != col {
                        let f = a[r][col];
                        if f != 0.0 {
                            for k in 0..n {
                                a[r][k] -= f * a[col][k];
                                inv[r][k] -= f * inv[col][k];
                            }
                        }
                    }
                }
            }
            if det <= DEGENERACY_THRESHOLD {
                return (None, det);
            }
            (Some(inv), det)
        }
    }
}

/// Central first and second differences of every component at one point,
/// `d1[i][c]` and `d2[sym][c]`.
fn component_jet(
    lat: &Lattice,
    fields: &[Vec<f64>],
    idx: usize,
) -> (
    [[f64; MAX_AMBIENT]; MAX_N],
    [[f64; MAX_AMBIENT]; MAX_N * (MAX_N + 1) / 2],
) {
    let n = lat.dim();
    let spacing = lat.spacing();
    let mut d1 = [[0.0; MAX_AMBIENT]; MAX_N];
    let mut d2 = [[0.0; MAX_AMBIENT]; MAX_N * (MAX_N + 1) / 2];
    let mut plus = [0usize; MAX_N];
    let mut minus = [0usize; MAX_N];
    for a in 0..n {
        plus[a] = lat.shift(idx, a, 1);
        minus[a] = lat.shift(idx, a, -1);
    }
    for a in 0..n {
        let h = spacing[a];
        for (c, f) in fields.iter().enumerate() {
            let (fp, f0, fm) = (f[plus[a]], f[idx], f[minus[a]]);
            d1[a][c] = (fp - fm) / (2.0 * h);
            d2[sym_index(a, a, n)][c] = (fp - 2.0 * f0 + fm) / (h * h);
        }
        for b in a + 1..n {
            let pp = lat.shift(plus[a], b, 1);
            let pm = lat.shift(plus[a], b, -1);
            let mp = lat.shift(minus[a], b, 1);
            let mm = lat.shift(minus[a], b, -1);
            let scale = 4.0 * spacing[a] * spacing[b];
            let s = sym_index(a, b, n);
            for (c, f) in fields.iter().enumerate() {
                d2[s][c] = (f[pp] - f[pm] - f[mp] + f[mm]) / scale;
            }
        }
    }
    (d1, d2)
}

fn check_kernel_dims(n: usize, comps: usize) -> Result<()> {
    if n > MAX_N || comps > MAX_AMBIENT {
        return Err(Error::InvalidGrid(format!(
            "kernel supports n ≤ {MAX_N} and at most {MAX_AMBIENT} components"
        )));
    }
    Ok(())
}

fn parametric_velocity_at(grid: &ImmersionGrid, idx: usize) -> Result<[f64; MAX_AMBIENT]> {
    let n = grid.lattice.dim();
    let amb = grid.positions.len();
    let (d1, d2) = component_jet(&grid.lattice, &grid.positions, idx);
    let mut g = [[0.0; MAX_N]; MAX_N];
    for i in 0..n {
        for j in i..n {
            let v: f64 = (0..amb).map(|c| d1[i][c] * d1[j][c]).sum();
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    let (inv, det) = invert_small(&g, n);
    let gi = inv.ok_or(Error::SingularMetric { index: idx, det })?;
    // w = g^{ij} ∂²_ij F, then remove its tangential part
    let mut w = [0.0; MAX_AMBIENT];
    for i in 0..n {
        for j in 0..n {
            let s = sym_index(i, j, n);
            for c in 0..amb {
                w[c] += gi[i][j] * d2[s][c];
            }
        }
    }
    let mut lowered = [0.0; MAX_N];
    for (b, l) in lowered.iter_mut().enumerate().take(n) {
        *l = (0..amb).map(|c| w[c] * d1[b][c]).sum();
    }
    for a in 0..n {
        let coef: f64 = (0..n).map(|b| gi[a][b] * lowered[b]).sum();
        for c in 0..amb {
            w[c] -= coef * d1[a][c];
        }
    }
    Ok(w)
}

fn graph_velocity_at(grid: &GraphGrid, idx: usize) -> Result<[f64; MAX_AMBIENT]> {
    let n = grid.lattice.dim();
    let m = grid.values.len();
    let (d1, d2) = component_jet(&grid.lattice, &grid.values, idx);
    let mut g = [[0.0; MAX_N]; MAX_N];
    for i in 0..n {
        for j in i..n {
            let v: f64 =
                (0..m).map(|c| d1[i][c] * d1[j][c]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    let (inv, det) = invert_small(&g, n);
    let gi = inv.ok_or(Error::SingularMetric { index: idx, det })?;
    let mut v = [0.0; MAX_AMBIENT];
    for i in 0..n {
        for j in 0..n {
            let s = sym_index(i, j, n);
            for c in 0..m {
                v[c] += gi[i][j] * d2[s][c];
            }
        }
    }
    Ok(v)
}

fn to_components(points: Vec<[f64; MAX_AMBIENT]>, comps: usize) -> Vec<Vec<f64>> {
    (0..comps)
        .map(|c| points.iter().map(|p| p[c]).collect())
        .collect()
}

/// Mean curvature vector `H = g^{ij} P ∂²_{ij}F` at every point, one array per ambient component.
pub fn parametric_velocity(grid: &ImmersionGrid) -> Result<Vec<Vec<f64>>> {
    check_kernel_dims(grid.lattice.dim(), grid.positions.len())?;
    let pts = (0..grid.lattice.len())
        .into_par_iter()
        .map(|i| parametric_velocity_at(grid, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(to_components(pts, grid.positions.len()))
}

/// Nonparametric velocity `g^{ij} ∂²_{ij} f` with `g = I + dfᵀdf`, one array per fiber component.
pub fn graph_velocity(grid: &GraphGrid) -> Result<Vec<Vec<f64>>> {
    check_kernel_dims(grid.lattice.dim(), grid.values.len())?;
    let pts = (0..grid.lattice.len())
        .into_par_iter()
        .map(|i| graph_velocity_at(grid, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(to_components(pts, grid.values.len()))
}

pub fn velocity(state: &State) -> Result<Vec<Vec<f64>>> {
    match state {
        State::Parametric(g) => parametric_velocity(g),
        State::Graph(g) => graph_velocity(g),
    }
}

fn max_inverse_eigenvalue_at(state: &State, idx: usize) -> Result<f64> {
    let lat = state.lattice();
    let n = lat.dim();
    let (d1, _) = component_jet(lat, state.fields(), idx);
    let comps = state.fields().len();
    let graph = state.is_graph();
    let mut g = [[0.0; MAX_N]; MAX_N];
    for i in 0..n {
        for j in i..n {
            let mut v: f64 = (0..comps).map(|c| d1[i][c] * d1[j][c]).sum();
            if graph && i == j {
                v += 1.0;
            }
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    let (inv, det) = invert_small(&g, n);
    let gi = inv.ok_or(Error::SingularMetric { index: idx, det })?;
    Ok(match n {
        1 => gi[0][0],
        2 => {
            let mean = 0.5 * (gi[0][0] + gi[1][1]);
            mean + (0.25 * (gi[0][0] - gi[1][1]).powi(2) + gi[0][1] * gi[0][1]).sqrt()
        }
        _ => DMatrix::from_fn(n, n, |i, j| gi[i][j])
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

/// `cfl · h_min² / (2n · max λ_max(g⁻¹))`.
pub fn stable_dt(state: &State, cfl_safety: f64) -> Result<f64> {
    let lat = state.lattice();
    let n = lat.dim();
    check_kernel_dims(n, state.fields().len())?;
    let worst = (0..lat.len())
        .into_par_iter()
        .map(|i| max_inverse_eigenvalue_at(state, i))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    let h = lat.min_spacing();
    Ok(cfl_safety * h * h / (2.0 * n as f64 * worst))
}

fn axpy(base: &[Vec<f64>], scale: f64, dir: &[Vec<f64>]) -> Vec<Vec<f64>> {
    base.iter()
        .zip(dir)
        .map(|(b, d)| b.iter().zip(d).map(|(x, v)| x + scale * v).collect())
        .collect()
}

/// One explicit step of size `dt`. Step-size stability is the caller's
/// responsibility; a non-finite result is reported as [`Error::NonFinite`].
pub fn step(state: &State, dt: f64, scheme: Scheme) -> Result<State> {
    let t = state.time();
    let y = state.fields();
    let next = match scheme {
        Scheme::ExplicitEuler => axpy(y, dt, &velocity(state)?),
        Scheme::Rk4 => {
            let k1 = velocity(state)?;
            let s2 = state.with_fields(axpy(y, 0.5 * dt, &k1), t + 0.5 * dt);
            let k2 = velocity(&s2)?;
            let s3 = state.with_fields(axpy(y, 0.5 * dt, &k2), t + 0.5 * dt);
            let k3 = velocity(&s3)?;
            let s4 = state.with_fields(axpy(y, dt, &k3), t + dt);
            let k4 = velocity(&s4)?;
            y.iter()
                .enumerate()
                .map(|(c, yc)| {
                    yc.iter()
                        .enumerate()
                        .map(|(i, x)| {
                            x + dt / 6.0 * (k1[c][i] + 2.0 * k2[c][i] + 2.0 * k3[c][i] + k4[c][i])
                        })
                        .collect()
                })
                .collect()
        }
    };
    if next.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            step: 0,
            time: t + dt,
        });
    }
    Ok(state.with_fields(next, t + dt))
}

/// Whether a snapshot was asked for or only supports a time derivative at one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotKind {
    Scheduled,
    Stencil,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub kind: SnapshotKind,
    pub state: State,
}

impl Snapshot {
    pub fn time(&self) -> f64 {
        self.state.time()
    }
}

/// Per-snapshot diagnostics; `NaN` marks a column that was not computed or
/// does not apply (e.g. `min_delta` for parametric states).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub min_star_omega: f64,
    #[serde(rename = "max_A2")]
    pub max_a2: f64,
    #[serde(rename = "max_H")]
    pub max_h: f64,
    pub hausdorff_to_init: f64,
    pub min_delta: f64,
}

impl SeriesRow {
    pub fn csv_header() -> String {
        std::iter::once("t")
            .chain(SERIES_COLUMNS)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn csv_line(&self) -> String {
        [
            self.t,
            self.min_star_omega,
            self.max_a2,
            self.max_h,
            self.hausdorff_to_init,
            self.min_delta,
        ]
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub series: Vec<SeriesRow>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }

    pub fn initial(&self) -> Option<&State> {
        self.snapshots.first().map(|s| &s.state)
    }

    pub fn last(&self) -> Option<&State> {
        self.snapshots.last().map(|s| &s.state)
    }

    /// Scheduled snapshots with a neighbor on each side, where a centered
    /// time difference is available.
    pub fn derivative_points(&self) -> Vec<usize> {
        (1..self.len().saturating_sub(1))
            .filter(|&k| self.snapshots[k].kind == SnapshotKind::Scheduled)
            .collect()
    }

    pub fn series_csv(&self) -> String {
        let mut out = SeriesRow::csv_header();
        out.push('\n');
        for row in &self.series {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }
}

/// Outcome of [`run`]: the trajectory recorded so far and, if the run
/// stopped early, the error that stopped it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub halt: Option<Error>,
    /// Time of the last good state when the run halted.
    pub halt_time: Option<f64>,
}

impl RunResult {
    pub fn completed(&self) -> bool {
        self.halt.is_none()
    }
}

fn sample_cloud(state: &State) -> Vec<Vec<f64>> {
    (0..state.len())
        .filter(|&i| state.included(i))
        .map(|i| state.point(i))
        .collect()
}

/// Diagnostics of one state against the initial sample cloud.
pub fn series_row(state: &State, initial: &[Vec<f64>], config: &FlowConfig) -> Result<SeriesRow> {
    let n = state.intrinsic_dim();
    let form = ConstantNForm::base(n, state.ambient_dim());
    let want_geometry = ["min_star_omega", "max_A2", "max_H", "min_delta"]
        .iter()
        .any(|c| config.wants(c));
    let (mut so, mut a2, mut hh) = (f64::NAN, f64::NAN, f64::NAN);
    if want_geometry {
        let per_point = (0..state.len())
            .into_par_iter()
            .filter(|&i| state.included(i))
            .map(|i| {
                let s = GeometrySample::at(state, i)?;
                Ok((s.star_omega(&form), s.a_norm2(), s.mean_curvature().norm()))
            })
            .collect::<Result<Vec<_>>>()?;
        so = per_point.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        a2 = per_point.iter().map(|p| p.1).fold(0.0, f64::max);
        hh = per_point.iter().map(|p| p.2).fold(0.0, f64::max);
    }
    let pick = |col: &str, v: f64| if config.wants(col) { v } else { f64::NAN };
    let min_delta = if state.is_graph() && so > 0.0 {
        2.0 - 1.0 / (so * so)
    } else {
        f64::NAN
    };
    let hausdorff = if config.wants("hausdorff_to_init") {
        directed_hausdorff_by(&sample_cloud(state), initial, |a, b| state.distance(a, b))?
    } else {
        f64::NAN
    };
    Ok(SeriesRow {
        t: state.time(),
        min_star_omega: pick("min_star_omega", so),
        max_a2: pick("max_A2", a2),
        max_h: pick("max_H", hh),
        hausdorff_to_init: hausdorff,
        min_delta: pick("min_delta", min_delta),
    })
}

struct Recorder<'a> {
    config: &'a FlowConfig,
    initial: Vec<Vec<f64>>,
    trajectory: Trajectory,
    last_step: Option<usize>,
}

impl Recorder<'_> {
    fn push(&mut self, state: &State, step: usize, kind: SnapshotKind) -> Result<()> {
        if self.last_step == Some(step) {
            return Ok(());
        }
        let row = series_row(state, &self.initial, self.config)?;
        self.trajectory.series.push(row);
        self.trajectory.snapshots.push(Snapshot {
            step,
            kind,
            state: state.clone(),
        });
        self.last_step = Some(step);
        Ok(())
    }
}

/// Integrates from `init` to `config.t_end`, landing exactly on every
/// record time. Deterministic for identical inputs.
pub fn run(init: State, config: &FlowConfig) -> Result<RunResult> {
    config.validate()?;
    let mut targets: Vec<f64> = config.record_times.clone();
    targets.push(config.t_end);
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    let t_start = init.time();
    targets.retain(|&t| t > t_start);

    let mut rec = Recorder {
        config,
        initial: sample_cloud(&init),
        trajectory: Trajectory::default(),
        last_step: None,
    };
    rec.push(&init, 0, SnapshotKind::Scheduled)?;

    let mut state = init;
    let mut step_count = 0usize;
    let mut record_next = false;
    let mut halt = None;
    let mut target_iter = targets.into_iter().peekable();
    while let Some(&target) = target_iter.peek() {
        let t = state.time();
        let dt = match config.dt {
            Some(dt) => dt,
            None => match stable_dt(&state, config.cfl_safety) {
                Ok(dt) => dt,
                Err(e) => {
                    halt = Some(e);
                    break;
                }
            },
        };
        let remaining = target - t;
        let landing = remaining <= dt * (1.0 + 1e-12);
        let h = if landing {
            remaining
        } else if remaining < 2.0 * dt {
            0.5 * remaining
        } else {
            dt
        };
        let next = match step(&state, h, config.scheme) {
            Ok(mut s) => {
                if landing {
                    s.set_time(target);
                }
                s
            }
            Err(Error::NonFinite { time, .. }) => {
                halt = Some(Error::NonFinite {
                    step: step_count + 1,
                    time,
                });
                break;
            }
            Err(e) => {
                halt = Some(e);
                break;
            }
        };
        step_count += 1;
        let scheduled =
            landing || (config.record_every > 0 && step_count.is_multiple_of(config.record_every));
        if scheduled {
            if config.stencil {
                rec.push(&state, step_count - 1, SnapshotKind::Stencil)?;
            }
            rec.push(&next, step_count, SnapshotKind::Scheduled)?;
            record_next = config.stencil;
        } else if record_next {
            rec.push(&next, step_count, SnapshotKind::Stencil)?;
            record_next = false;
        }
        if landing {
            target_iter.next();
        }
        state = next;
    }
    let halt_time = halt.as_ref().map(|_| state.time());
    Ok(RunResult {
        trajectory: rec.trajectory,
        halt,
        halt_time,
    })
}
