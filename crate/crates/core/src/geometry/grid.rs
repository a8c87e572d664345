//! Periodic parameter lattices and the two sampled surface representations:
//! parametric immersions `F: Tⁿ → ℝⁿ⁺ᵐ` and graphs `f: Tⁿ → ℝᵐ`.

use nalgebra::DVector;
use serde::Serialize;

use super::Jet2;
use crate::error::{Error, Result};

/// Smallest number of samples per axis for which the stencils are meaningful.
pub const MIN_POINTS_PER_AXIS: usize = 8;

/// Regular periodic lattice over `Tⁿ`, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lattice {
    shape: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    #[serde(skip)]
    strides: Vec<usize>,
}

impl Lattice {
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::InvalidGrid(format!(
                "intrinsic dimension {} outside 1..=4",
                shape.len()
            )));
        }
        if spacing.len() != shape.len() || origin.len() != shape.len() {
            return Err(Error::InvalidGrid(
                "shape/spacing/origin length mismatch".into(),
            ));
        }
        if let Some(&n) = shape.iter().find(|&&n| n < MIN_POINTS_PER_AXIS) {
            return Err(Error::InvalidGrid(format!(
                "{n} points on an axis, need at least {MIN_POINTS_PER_AXIS}"
            )));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::InvalidGrid(
                "spacing must be positive and finite".into(),
            ));
        }
        let mut strides = vec![1; shape.len()];
        for axis in (0..shape.len() - 1).rev() {
            strides[axis] = strides[axis + 1] * shape[axis + 1];
        }
        Ok(Self {
            shape,
            spacing,
            origin,
            strides,
        })
    }

    /// Lattice with `shape[i]` samples over a period `periods[i]`, starting at 0.
    pub fn periodic(shape: Vec<usize>, periods: &[f64]) -> Result<Self> {
        let spacing = shape
            .iter()
            .zip(periods)
            .map(|(&n, &p)| p / n as f64)
            .collect();
        let origin = vec![0.0; shape.len()];
        Self::new(shape, spacing, origin)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn period(&self, axis: usize) -> f64 {
        self.shape[axis] as f64 * self.spacing[axis]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn axis_index(&self, index: usize, axis: usize) -> usize {
        (index / self.strides[axis]) % self.shape[axis]
    }

    pub fn multi_index(&self, index: usize) -> Vec<usize> {
        (0..self.dim()).map(|a| self.axis_index(index, a)).collect()
    }

    /// Neighbor `delta` steps along `axis`, wrapping periodically.
    #[inline]
    pub fn shift(&self, index: usize, axis: usize, delta: isize) -> usize {
        let n = self.shape[axis] as isize;
        let c = self.axis_index(index, axis) as isize;
        let wrapped = (c + delta).rem_euclid(n);
        (index as isize + (wrapped - c) * self.strides[axis] as isize) as usize
    }

    pub fn coord(&self, index: usize, axis: usize) -> f64 {
        self.origin[axis] + self.axis_index(index, axis) as f64 * self.spacing[axis]
    }

    pub fn coords(&self, index: usize) -> Vec<f64> {
        (0..self.dim()).map(|a| self.coord(index, a)).collect()
    }

    /// Same lattice with every axis resampled to `points` samples.
    pub fn refined(&self, points: usize) -> Result<Self> {
        let shape = vec![points; self.dim()];
        let spacing = (0..self.dim())
            .map(|a| self.period(a) / points as f64)
            .collect();
        Self::new(shape, spacing, self.origin.clone())
    }
}

/// Index of the unordered pair `(i, j)` in the packed upper triangle of an `n × n` matrix.
#[inline]
pub fn sym_index(i: usize, j: usize, n: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * n - a * (a + 1) / 2 + b
}

pub fn sym_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Central first difference of a scalar field.
#[inline]
pub fn diff1(lat: &Lattice, field: &[f64], index: usize, axis: usize) -> f64 {
    let p = lat.shift(index, axis, 1);
    let m = lat.shift(index, axis, -1);
    (field[p] - field[m]) / (2.0 * lat.spacing[axis])
}

/// Central second difference (pure or mixed) of a scalar field.
#[inline]
pub fn diff2(lat: &Lattice, field: &[f64], index: usize, a: usize, b: usize) -> f64 {
    if a == b {
        let p = lat.shift(index, a, 1);
        let m = lat.shift(index, a, -1);
        let h = lat.spacing[a];
        (field[p] - 2.0 * field[index] + field[m]) / (h * h)
    } else {
        let p = lat.shift(index, a, 1);
        let m = lat.shift(index, a, -1);
        let pp = lat.shift(p, b, 1);
        let pm = lat.shift(p, b, -1);
        let mp = lat.shift(m, b, 1);
        let mm = lat.shift(m, b, -1);
        (field[pp] - field[pm] - field[mp] + field[mm]) / (4.0 * lat.spacing[a] * lat.spacing[b])
    }
}

/// Gradient and packed Hessian of a scalar field at one lattice point.
pub fn scalar_jet(lat: &Lattice, field: &[f64], index: usize) -> (Vec<f64>, Vec<f64>) {
    let n = lat.dim();
    let grad = (0..n).map(|a| diff1(lat, field, index, a)).collect();
    let mut hess = vec![0.0; sym_len(n)];
    for i in 0..n {
        for j in i..n {
            hess[sym_index(i, j, n)] = diff2(lat, field, index, i, j);
        }
    }
    (grad, hess)
}

fn vector_jet(lat: &Lattice, comps: &[Vec<f64>], index: usize) -> Jet2 {
    let n = lat.dim();
    let first = (0..n)
        .map(|a| DVector::from_iterator(comps.len(), comps.iter().map(|c| diff1(lat, c, index, a))))
        .collect();
    let mut second = vec![DVector::zeros(comps.len()); sym_len(n)];
    for i in 0..n {
        for j in i..n {
            second[sym_index(i, j, n)] = DVector::from_iterator(
                comps.len(),
                comps.iter().map(|c| diff2(lat, c, index, i, j)),
            );
        }
    }
    Jet2 { first, second }
}

/// A sampled n-dimensional surface in ℝⁿ⁺ᵐ with periodic parameter domain.
pub trait Surface: Sync {
    fn lattice(&self) -> &Lattice;
    fn codim(&self) -> usize;
    fn time(&self) -> f64;

    /// Finite-difference 2-jet of the immersion at a lattice point.
    fn jet(&self, index: usize) -> Jet2;

    /// Ambient position of a lattice point.
    fn point(&self, index: usize) -> Vec<f64>;

    /// `to − from` in the ambient space, honoring any periodic identification.
    fn displacement(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        to.iter().zip(from).map(|(b, a)| b - a).collect()
    }

    /// Points excluded from diagnostics (e.g. near parametrization poles) return false.
    fn included(&self, _index: usize) -> bool {
        true
    }

    fn intrinsic_dim(&self) -> usize {
        self.lattice().dim()
    }

    fn ambient_dim(&self) -> usize {
        self.intrinsic_dim() + self.codim()
    }

    fn len(&self) -> usize {
        self.lattice().len()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.displacement(a, b)
            .iter()
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }
}

/// Sampled parametric immersion. Positions are stored one array per ambient component.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmersionGrid {
    pub lattice: Lattice,
    pub codim: usize,
    pub positions: Vec<Vec<f64>>,
    pub time: f64,
    /// Diagnostic exclusion mask (`false` = excluded); `None` includes everything.
    pub mask: Option<Vec<bool>>,
}

impl ImmersionGrid {
    /// Validated constructor: checks array sizes, finiteness and that the
    /// sampled metric is nondegenerate everywhere.
    pub fn new(
        lattice: Lattice,
        codim: usize,
        positions: Vec<Vec<f64>>,
        time: f64,
    ) -> Result<Self> {
        let grid = Self::from_parts(lattice, codim, positions, time)?;
        for index in 0..grid.lattice.len() {
            super::metric(&grid.jet(index)).map_err(|e| match e {
                Error::SingularMetric { det, .. } => Error::SingularMetric { index, det },
                other => other,
            })?;
        }
        Ok(grid)
    }

    /// Size checks only; used by the integrator for intermediate stages.
    pub fn from_parts(
        lattice: Lattice,
        codim: usize,
        positions: Vec<Vec<f64>>,
        time: f64,
    ) -> Result<Self> {
        if codim == 0 {
            return Err(Error::InvalidGrid("codimension must be at least 1".into()));
        }
        if positions.len() != lattice.dim() + codim {
            return Err(Error::InvalidGrid(format!(
                "{} position components for ambient dimension {}",
                positions.len(),
                lattice.dim() + codim
            )));
        }
        if positions.iter().any(|c| c.len() != lattice.len()) {
            return Err(Error::InvalidGrid(
                "component length differs from lattice size".into(),
            ));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite position".into()));
        }
        Ok(Self {
            lattice,
            codim,
            positions,
            time,
            mask: None,
        })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        self.mask = Some(mask);
        self
    }
}

impl Surface for ImmersionGrid {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn codim(&self) -> usize {
        self.codim
    }

    fn time(&self) -> f64 {
        self.time
    }

    fn jet(&self, index: usize) -> Jet2 {
        vector_jet(&self.lattice, &self.positions, index)
    }

    fn point(&self, index: usize) -> Vec<f64> {
        self.positions.iter().map(|c| c[index]).collect()
    }

    fn included(&self, index: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[index])
    }
}

/// Sampled vector-valued graph `f: Tⁿ → ℝᵐ`, one array per fiber component.
/// The embedded surface is `x ↦ (x, f(x))` in `Tⁿ × ℝᵐ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphGrid {
    pub lattice: Lattice,
    pub values: Vec<Vec<f64>>,
    pub time: f64,
}

impl GraphGrid {
    pub fn new(lattice: Lattice, values: Vec<Vec<f64>>, time: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("codimension must be at least 1".into()));
        }
        if values.iter().any(|c| c.len() != lattice.len()) {
            return Err(Error::InvalidGrid(
                "component length differs from lattice size".into(),
            ));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite graph value".into()));
        }
        Ok(Self {
            lattice,
            values,
            time,
        })
    }

    /// Finite-difference differential `df` (m × n) at a lattice point.
    pub fn differential(&self, index: usize) -> nalgebra::DMatrix<f64> {
        let n = self.lattice.dim();
        nalgebra::DMatrix::from_fn(self.values.len(), n, |a, i| {
            diff1(&self.lattice, &self.values[a], index, i)
        })
    }
}

impl Surface for GraphGrid {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    fn codim(&self) -> usize {
        self.values.len()
    }

    fn time(&self) -> f64 {
        self.time
    }

    fn jet(&self, index: usize) -> Jet2 {
        let n = self.lattice.dim();
        let m = self.values.len();
        let fiber = vector_jet(&self.lattice, &self.values, index);
        let first = fiber
            .first
            .iter()
            .enumerate()
            .map(|(i, df)| {
                let mut v = DVector::zeros(n + m);
                v[i] = 1.0;
                v.rows_mut(n, m).copy_from(df);
                v
            })
            .collect();
        let second = fiber
            .second
            .iter()
            .map(|d2f| {
                let mut v = DVector::zeros(n + m);
                v.rows_mut(n, m).copy_from(d2f);
                v
            })
            .collect();
        Jet2 { first, second }
    }

    fn point(&self, index: usize) -> Vec<f64> {
        let mut p = self.lattice.coords(index);
        p.extend(self.values.iter().map(|c| c[index]));
        p
    }

    /// Base coordinates use the minimal periodic image.
    fn displacement(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        let n = self.lattice.dim();
        to.iter()
            .zip(from)
            .enumerate()
            .map(|(a, (b, c))| {
                let d = b - c;
                if a < n {
                    let p = self.lattice.period(a);
                    d - p * (d / p).round()
                } else {
                    d
                }
            })
            .collect()
    }
}
