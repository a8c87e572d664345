//! Pointwise differential geometry of a sampled immersion: induced metric,
//! normal projection, second fundamental form, orthonormal frames and the
//! `*Ω` function, all computed from finite-difference 2-jets.

mod grid;

pub use grid::{
    diff1, diff2, scalar_jet, sym_index, sym_len, GraphGrid, ImmersionGrid, Lattice, Surface,
    MIN_POINTS_PER_AXIS,
};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::ConstantNForm;

/// `det g` at or below this value is treated as a broken immersion.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// Normal candidates whose projection falls below this length are skipped.
const NORMAL_CANDIDATE_FLOOR: f64 = 1e-6;

/// First and second partial derivatives of the immersion at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    /// `∂F/∂x^i`, one ambient vector per parameter axis.
    pub first: Vec<DVector<f64>>,
    /// `∂²F/∂x^i∂x^j` for `i ≤ j`, packed by [`sym_index`].
    pub second: Vec<DVector<f64>>,
}

impl Jet2 {
    pub fn n(&self) -> usize {
        self.first.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.first[0].len()
    }

    pub fn second(&self, i: usize, j: usize) -> &DVector<f64> {
        &self.second[sym_index(i, j, self.n())]
    }
}

/// Finite-difference jet of any sampled surface at a lattice point.
pub fn jet(surface: &dyn Surface, index: usize) -> Jet2 {
    surface.jet(index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub sqrt_det_g: f64,
}

/// Induced metric `g_ij = ⟨∂_iF, ∂_jF⟩`, its inverse and `√det g`.
///
/// The error carries index 0; grid-level callers substitute the lattice index.
pub fn metric(j: &Jet2) -> Result<Metric> {
    let n = j.n();
    let g = DMatrix::from_fn(n, n, |a, b| j.first[a].dot(&j.first[b]));
    let det = g.determinant();
    if !(det > DEGENERACY_THRESHOLD) {
        return Err(Error::SingularMetric { index: 0, det });
    }
    let g_inv = g
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMetric { index: 0, det })?;
    Ok(Metric {
        g,
        g_inv,
        sqrt_det_g: det.sqrt(),
    })
}

/// `P^A_B = δ^A_B − g^{kl} ∂_kF^A ∂_lF^B`.
pub fn normal_projection(j: &Jet2, g_inv: &DMatrix<f64>) -> DMatrix<f64> {
    let amb = j.ambient_dim();
    let mut p = DMatrix::identity(amb, amb);
    for k in 0..j.n() {
        for l in 0..j.n() {
            p -= g_inv[(k, l)] * &j.first[k] * j.first[l].transpose();
        }
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondFundamentalForm {
    /// `A_ij = P(∂²_ij F)`, packed by [`sym_index`].
    pub tensor: Vec<DVector<f64>>,
    /// `|A|² = g^{ik} g^{jl} ⟨A_ij, A_kl⟩`.
    pub norm2: f64,
    /// `H = g^{ij} A_ij`.
    pub mean_curvature: DVector<f64>,
}

pub fn second_fundamental_form(
    j: &Jet2,
    p: &DMatrix<f64>,
    g_inv: &DMatrix<f64>,
) -> SecondFundamentalForm {
    let n = j.n();
    let tensor: Vec<DVector<f64>> = j.second.iter().map(|s| p * s).collect();
    let at = |a: usize, b: usize| &tensor[sym_index(a, b, n)];
    let mut norm2 = 0.0;
    let mut h = DVector::zeros(j.ambient_dim());
    for a in 0..n {
        for b in 0..n {
            h += g_inv[(a, b)] * at(a, b);
            for c in 0..n {
                for d in 0..n {
                    norm2 += g_inv[(a, c)] * g_inv[(b, d)] * at(a, b).dot(at(c, d));
                }
            }
        }
    }
    SecondFundamentalForm {
        tensor,
        norm2: norm2.max(0.0),
        mean_curvature: h,
    }
}

/// Orthonormal tangent and normal frames at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    pub tangent: Vec<DVector<f64>>,
    pub normal: Vec<DVector<f64>>,
}

fn orthogonalize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    // two passes keep the result orthogonal to roundoff
    for _ in 0..2 {
        for b in basis {
            let c = v.dot(b);
            v.axpy(-c, b, 1.0);
        }
    }
}

/// Gram–Schmidt frames. Tangent vectors follow the parameter axes, so the
/// parametrization's orientation is kept; normal vectors come from the
/// projected ambient basis in axis order, each signed so its first
/// non-negligible component is positive.
pub fn frames(j: &Jet2, p: &DMatrix<f64>) -> Result<Frames> {
    let amb = j.ambient_dim();
    let n = j.n();
    let m = amb - n;
    let mut tangent: Vec<DVector<f64>> = Vec::with_capacity(n);
    for d in &j.first {
        let mut v = d.clone();
        orthogonalize(&mut v, &tangent);
        let len = v.norm();
        if !(len > 0.0) {
            return Err(Error::SingularMetric { index: 0, det: 0.0 });
        }
        tangent.push(v / len);
    }
    let mut normal: Vec<DVector<f64>> = Vec::with_capacity(m);
    for a in 0..amb {
        if normal.len() == m {
            break;
        }
        let mut v = p.column(a).into_owned();
        orthogonalize(&mut v, &normal);
        let len = v.norm();
        if len < NORMAL_CANDIDATE_FLOOR {
            continue;
        }
        v /= len;
        if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
            if *first < 0.0 {
                v = -v;
            }
        }
        normal.push(v);
    }
    if normal.len() < m {
        return Err(Error::FrameDegeneracy {
            found: normal.len(),
            needed: m,
        });
    }
    Ok(Frames { tangent, normal })
}

/// Second fundamental form in frame components, `h[α][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HComponents {
    pub m: usize,
    pub n: usize,
    data: Vec<f64>,
}

impl HComponents {
    pub fn get(&self, alpha: usize, i: usize, j: usize) -> f64 {
        self.data[(alpha * self.n + i) * self.n + j]
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|h| h * h).sum()
    }
}

/// Coefficients `C` with `e_i = Σ_a C[i][a] ∂_aF` for tangent frame vectors.
fn tangent_coefficients(j: &Jet2, g_inv: &DMatrix<f64>, tangent: &[DVector<f64>]) -> DMatrix<f64> {
    let n = j.n();
    DMatrix::from_fn(tangent.len(), n, |i, a| {
        (0..n)
            .map(|b| g_inv[(a, b)] * tangent[i].dot(&j.first[b]))
            .sum()
    })
}

/// `h_{αij} = ⟨A(ẽ_i, ẽ_j), e_α⟩` with `ẽ_i` the tangent frame in the coordinate basis.
pub fn h_components(
    j: &Jet2,
    g_inv: &DMatrix<f64>,
    sff: &SecondFundamentalForm,
    f: &Frames,
) -> HComponents {
    let n = j.n();
    let m = f.normal.len();
    let c = tangent_coefficients(j, g_inv, &f.tangent);
    // ⟨A_ab, e_α⟩ for all a ≤ b
    let proj: Vec<Vec<f64>> = f
        .normal
        .iter()
        .map(|e| sff.tensor.iter().map(|a| a.dot(e)).collect())
        .collect();
    let mut data = vec![0.0; m * n * n];
    for alpha in 0..m {
        for i in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s += c[(i, a)] * c[(k, b)] * proj[alpha][sym_index(a, b, n)];
                    }
                }
                data[(alpha * n + i) * n + k] = s;
            }
        }
    }
    HComponents { m, n, data }
}

/// `*Ω = Ω(∂₁F, …, ∂ₙF) / √det g`.
pub fn star_omega(j: &Jet2, sqrt_det_g: f64, form: &ConstantNForm) -> f64 {
    form.evaluate(&j.first) / sqrt_det_g
}

/// Singular values of an `m × n` differential, sorted descending.
pub fn singular_values(df: &DMatrix<f64>) -> Vec<f64> {
    let k = df.nrows().min(df.ncols());
    if k == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = df
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.truncate(k);
    s
}

/// `δ = 2 − Π(1 + λ_i²)`; positive exactly when `*Ω > 1/√2`.
pub fn delta_margin(singular: &[f64]) -> f64 {
    2.0 - singular.iter().map(|l| 1.0 + l * l).product::<f64>()
}

/// Everything the estimates need at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySample {
    pub jet: Jet2,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub sqrt_det_g: f64,
    pub projection: DMatrix<f64>,
    pub sff: SecondFundamentalForm,
    /// `Γ^k_ij = g^{kl} ⟨∂²_ij F, ∂_l F⟩`, indexed `[k][sym_index(i, j)]`.
    pub christoffel: Vec<Vec<f64>>,
}

impl GeometrySample {
    pub fn from_jet(jet: Jet2) -> Result<Self> {
        let Metric {
            g,
            g_inv,
            sqrt_det_g,
        } = metric(&jet)?;
        let projection = normal_projection(&jet, &g_inv);
        let sff = second_fundamental_form(&jet, &projection, &g_inv);
        let christoffel = christoffel(&jet, &g_inv);
        Ok(Self {
            jet,
            g,
            g_inv,
            sqrt_det_g,
            projection,
            sff,
            christoffel,
        })
    }

    pub fn at(surface: &dyn Surface, index: usize) -> Result<Self> {
        Self::from_jet(surface.jet(index)).map_err(|e| with_index(e, index))
    }

    pub fn n(&self) -> usize {
        self.jet.n()
    }

    pub fn a_norm2(&self) -> f64 {
        self.sff.norm2
    }

    pub fn mean_curvature(&self) -> &DVector<f64> {
        &self.sff.mean_curvature
    }

    pub fn frames(&self) -> Result<Frames> {
        frames(&self.jet, &self.projection)
    }

    pub fn h_components(&self, f: &Frames) -> HComponents {
        h_components(&self.jet, &self.g_inv, &self.sff, f)
    }

    /// `*Ω = Ω(∂₁F, …, ∂ₙF) / √det g` at this point.
    pub fn star_omega(&self, form: &ConstantNForm) -> f64 {
        star_omega(&self.jet, self.sqrt_det_g, form)
    }

    /// Tangential coordinates `τ^a = g^{ab} ⟨v, ∂_bF⟩` of an ambient vector.
    pub fn tangential_coordinates(&self, v: &DVector<f64>) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| self.g_inv[(a, b)] * v.dot(&self.jet.first[b]))
                    .sum()
            })
            .collect()
    }

    /// Largest eigenvalue of `g⁻¹`.
    pub fn max_inverse_metric_eigenvalue(&self) -> f64 {
        max_sym_eigenvalue(&self.g_inv)
    }
}

pub(crate) fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        1 => m[(0, 0)],
        2 => {
            let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            let mean = 0.5 * (a + d);
            let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            mean + r
        }
        _ => m
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

fn christoffel(j: &Jet2, g_inv: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = j.n();
    // ⟨∂²_ij F, ∂_l F⟩
    let lowered: Vec<Vec<f64>> = j
        .second
        .iter()
        .map(|s| j.first.iter().map(|d| s.dot(d)).collect())
        .collect();
    (0..n)
        .map(|k| {
            lowered
                .iter()
                .map(|low| (0..n).map(|l| g_inv[(k, l)] * low[l]).sum())
                .collect()
        })
        .collect()
}

pub(crate) fn with_index(e: Error, index: usize) -> Error {
    match e {
        Error::SingularMetric { det, .. } => Error::SingularMetric { index, det },
        other => other,
    }
}

/// Geometry at every lattice point, computed in parallel.
pub fn sample_all(surface: &dyn Surface) -> Result<Vec<GeometrySample>> {
    (0..surface.len())
        .into_par_iter()
        .map(|i| GeometrySample::at(surface, i))
        .collect()
}

/// `Δφ = g^{ij}(∂²_ij φ − Γ^k_ij ∂_k φ)`, the Laplace–Beltrami operator of
/// the induced metric applied to a scalar field on the same lattice.
pub fn induced_laplacian(field: &[f64], surface: &dyn Surface) -> Result<Vec<f64>> {
    let lat = surface.lattice();
    if field.len() != lat.len() {
        return Err(Error::InvalidArgument(
            "field length differs from lattice size".into(),
        ));
    }
    (0..lat.len())
        .into_par_iter()
        .map(|idx| {
            let jet = surface.jet(idx);
            let m = metric(&jet).map_err(|e| with_index(e, idx))?;
            let gamma = christoffel(&jet, &m.g_inv);
            Ok(laplacian_at(lat, field, idx, &m.g_inv, &gamma))
        })
        .collect()
}

pub(crate) fn laplacian_at(
    lat: &Lattice,
    field: &[f64],
    idx: usize,
    g_inv: &DMatrix<f64>,
    gamma: &[Vec<f64>],
) -> f64 {
    let n = lat.dim();
    let (grad, hess) = scalar_jet(lat, field, idx);
    let mut out = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = sym_index(i, j, n);
            let mut term = hess[s];
            for (k, gk) in gamma.iter().enumerate() {
                term -= gk[s] * grad[k];
            }
            out += g_inv[(i, j)] * term;
        }
    }
    out
}
