//! Seeded generators of initial data: exact solutions, Lipschitz corner
//! graphs and their mollifications, band-limited random data and the
//! Lawson–Osserman cone.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::State;
use crate::geometry::{singular_values, GraphGrid, ImmersionGrid, Lattice};

/// Period of the corner graphs along every base axis.
pub const CORNER_PERIOD: f64 = 2.0;

/// Inner and outer window radii of the Lawson–Osserman data, as fractions of the box side.
pub const LO_WINDOW: (f64, f64) = (0.4, 0.45);

/// Polar band excluded from sphere diagnostics, in radians from each pole.
pub const DEFAULT_POLAR_BAND: f64 = 0.3;

/// Serializable description of an initial datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Circle {
        radius: f64,
        points: usize,
        #[serde(default = "default_circle_ambient")]
        ambient: usize,
    },
    Sphere {
        radius: f64,
        points: usize,
        #[serde(default = "default_polar_band")]
        polar_band: f64,
    },
    Torus {
        r1: f64,
        r2: f64,
        points: usize,
    },
    CornerGraph {
        n: usize,
        m: usize,
        slope: f64,
        points: usize,
        #[serde(default)]
        seed: u64,
        /// Mollification width in units of the grid spacing; 0 keeps the raw data.
        #[serde(default)]
        sigma_cells: f64,
    },
    RandomFourier {
        n: usize,
        m: usize,
        points: usize,
        modes: usize,
        amplitude: f64,
        #[serde(default)]
        seed: u64,
        /// Perturb a unit circle in ℝ² (`n = m = 1`) instead of a flat graph.
        #[serde(default)]
        immersed: bool,
    },
    LawsonOsserman {
        points: usize,
        #[serde(default = "default_box")]
        box_scale: f64,
    },
}

fn default_circle_ambient() -> usize {
    2
}

fn default_polar_band() -> f64 {
    DEFAULT_POLAR_BAND
}

fn default_box() -> f64 {
    2.0
}

impl GeneratorSpec {
    pub fn seed(&self) -> Option<u64> {
        match self {
            GeneratorSpec::CornerGraph { seed, .. } | GeneratorSpec::RandomFourier { seed, .. } => {
                Some(*seed)
            }
            _ => None,
        }
    }

    /// Grid points per axis.
    pub fn points(&self) -> usize {
        match self {
            GeneratorSpec::Circle { points, .. }
            | GeneratorSpec::Sphere { points, .. }
            | GeneratorSpec::Torus { points, .. }
            | GeneratorSpec::CornerGraph { points, .. }
            | GeneratorSpec::RandomFourier { points, .. }
            | GeneratorSpec::LawsonOsserman { points, .. } => *points,
        }
    }

    /// The same datum sampled with `count` points per axis.
    pub fn with_points(&self, count: usize) -> GeneratorSpec {
        let mut spec = self.clone();
        match &mut spec {
            GeneratorSpec::Circle { points, .. }
            | GeneratorSpec::Sphere { points, .. }
            | GeneratorSpec::Torus { points, .. }
            | GeneratorSpec::CornerGraph { points, .. }
            | GeneratorSpec::RandomFourier { points, .. }
            | GeneratorSpec::LawsonOsserman { points, .. } => *points = count,
        }
        spec
    }

    /// Smooth data independent of the grid, suitable for refinement studies.
    /// Corner graphs are excluded since their mollification width is given in
    /// grid cells.
    pub fn is_analytic(&self) -> bool {
        !matches!(
            self,
            GeneratorSpec::CornerGraph { .. } | GeneratorSpec::LawsonOsserman { .. }
        )
    }

    pub fn generate(&self) -> Result<State> {
        Ok(match self {
            GeneratorSpec::Circle {
                radius,
                points,
                ambient,
            } => circle_in(*radius, *points, *ambient)?.into(),
            GeneratorSpec::Sphere {
                radius,
                points,
                polar_band,
            } => sphere_with_band(*radius, *points, *polar_band)?.into(),
            GeneratorSpec::Torus { r1, r2, points } => clifford_torus(*r1, *r2, *points)?.into(),
            GeneratorSpec::CornerGraph {
                n,
                m,
                slope,
                points,
                seed,
                sigma_cells,
            } => {
                let raw = corner_graph(*n, *m, *slope, *points, *seed)?;
                let h = raw.lattice.min_spacing();
                mollify(&raw, sigma_cells * h)?.into()
            }
            GeneratorSpec::RandomFourier {
                n,
                m,
                points,
                modes,
                amplitude,
                seed,
                immersed,
            } => {
                if *immersed {
                    if (*n, *m) != (1, 1) {
                        return Err(Error::InvalidArgument(
                            "immersed random data is a perturbed circle: n = m = 1".into(),
                        ));
                    }
                    perturbed_circle(*points, *modes, *amplitude, *seed)?.into()
                } else {
                    random_fourier(*n, *m, *points, *modes, *amplitude, *seed)?.into()
                }
            }
            GeneratorSpec::LawsonOsserman { points, box_scale } => {
                lawson_osserman(*points, *box_scale)?.into()
            }
        })
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} = {v} must be positive"
        )))
    }
}

/// Circle of radius `r` in the first two coordinates of `ℝ^ambient`.
pub fn circle_in(r: f64, points: usize, ambient: usize) -> Result<ImmersionGrid> {
    check_positive("radius", r)?;
    if ambient < 2 {
        return Err(Error::InvalidArgument(
            "a circle needs ambient dimension ≥ 2".into(),
        ));
    }
    let lat = Lattice::periodic(vec![points], &[2.0 * PI])?;
    let mut pos = vec![vec![0.0; points]; ambient];
    for i in 0..points {
        let t = lat.coord(i, 0);
        pos[0][i] = r * t.cos();
        pos[1][i] = r * t.sin();
    }
    ImmersionGrid::new(lat, ambient - 1, pos, 0.0)
}

pub fn circle(r: f64, points: usize) -> Result<ImmersionGrid> {
    circle_in(r, points, 2)
}

/// Round sphere of radius `r` in ℝ³ with the default polar band masked.
pub fn sphere(r: f64, points: usize) -> Result<ImmersionGrid> {
    sphere_with_band(r, points, DEFAULT_POLAR_BAND)
}

/// Round sphere through `F(θ, φ) = r (sin θ cos φ, sin θ sin φ, cos θ)` with
/// `θ ∈ [0, 2π)` covering the sphere twice, so the map is periodic in both
/// parameters. The `θ` samples are offset by half a cell to avoid the poles,
/// where the metric degenerates; points within `band` of a pole are masked
/// out of diagnostics.
pub fn sphere_with_band(r: f64, points: usize, band: f64) -> Result<ImmersionGrid> {
    check_positive("radius", r)?;
    if !(0.0..PI / 2.0).contains(&band) {
        return Err(Error::InvalidArgument(format!(
            "polar band {band} not in [0, π/2)"
        )));
    }
    let h = 2.0 * PI / points as f64;
    let lat = Lattice::new(vec![points, points], vec![h, h], vec![0.5 * h, 0.0])?;
    let mut pos = vec![vec![0.0; lat.len()]; 3];
    let mut mask = vec![true; lat.len()];
    for i in 0..lat.len() {
        let (th, ph) = (lat.coord(i, 0), lat.coord(i, 1));
        pos[0][i] = r * th.sin() * ph.cos();
        pos[1][i] = r * th.sin() * ph.sin();
        pos[2][i] = r * th.cos();
        mask[i] = th.sin().abs() > band.sin();
    }
    Ok(ImmersionGrid::new(lat, 1, pos, 0.0)?.with_mask(mask))
}

/// Clifford-type torus `(r₁ cos u, r₁ sin u, r₂ cos v, r₂ sin v)` in ℝ⁴.
pub fn clifford_torus(r1: f64, r2: f64, points: usize) -> Result<ImmersionGrid> {
    check_positive("r1", r1)?;
    check_positive("r2", r2)?;
    let lat = Lattice::periodic(vec![points, points], &[2.0 * PI, 2.0 * PI])?;
    let mut pos = vec![vec![0.0; lat.len()]; 4];
    for i in 0..lat.len() {
        let (u, v) = (lat.coord(i, 0), lat.coord(i, 1));
        pos[0][i] = r1 * u.cos();
        pos[1][i] = r1 * u.sin();
        pos[2][i] = r2 * v.cos();
        pos[3][i] = r2 * v.sin();
    }
    ImmersionGrid::new(lat, 2, pos, 0.0)
}

/// Triangle wave of period 2 with slopes ±1 and range [0, 1].
fn triangle(x: f64) -> f64 {
    (x.rem_euclid(CORNER_PERIOD) - 1.0).abs()
}

/// `min *Ω = (1 + s²)^{−min(n,m)/2}` of a corner graph with slope `s`.
pub fn corner_min_star_omega(n: usize, m: usize, slope: f64) -> f64 {
    (1.0 + slope * slope).powf(-(n.min(m) as f64) / 2.0)
}

/// Base axis driving fiber component `alpha` of a corner graph.
fn corner_axis(alpha: usize, n: usize) -> usize {
    alpha % n
}

/// Periodic piecewise-linear graph over `[0, 2)ⁿ`:
/// `f^α(x) = (s/√k_α) tri(x_{α mod n} + φ_α)` with seeded phases `φ_α` and
/// `k_α` the number of components sharing that axis, so that the operator
/// norm of `df` is exactly `s`.
pub fn corner_graph(n: usize, m: usize, slope: f64, points: usize, seed: u64) -> Result<GraphGrid> {
    if !(slope >= 0.0 && slope.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "slope {slope} must be nonnegative"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidArgument(
            "codimension must be at least 1".into(),
        ));
    }
    let lat = Lattice::periodic(vec![points; n], &vec![CORNER_PERIOD; n])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..CORNER_PERIOD)).collect();
    let values = (0..m)
        .map(|alpha| {
            let axis = corner_axis(alpha, n);
            let sharing = (0..m).filter(|&b| corner_axis(b, n) == axis).count() as f64;
            let amp = slope / sharing.sqrt();
            (0..lat.len())
                .map(|i| amp * triangle(lat.coord(i, axis) + phases[alpha]))
                .collect()
        })
        .collect();
    GraphGrid::new(lat, values, 0.0)
}

/// Largest operator norm of the finite-difference differential over the grid.
pub fn max_slope(g: &GraphGrid) -> f64 {
    (0..g.lattice.len())
        .map(|i| {
            singular_values(&g.differential(i))
                .first()
                .copied()
                .unwrap_or(0.0)
        })
        .fold(0.0, f64::max)
}

fn gaussian_weights(sigma: f64, h: f64, len: usize) -> Vec<f64> {
    let reach = ((4.0 * sigma / h).floor() as usize).min(len / 2);
    let raw: Vec<f64> = (0..=reach)
        .map(|k| (-0.5 * (k as f64 * h / sigma).powi(2)).exp())
        .collect();
    let total = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
    raw.iter().map(|w| w / total).collect()
}

/// Periodic Gaussian convolution of width `sigma`, truncated at `4σ` and
/// renormalized. Fails if the result is steeper than the input.
pub fn mollify(g: &GraphGrid, sigma: f64) -> Result<GraphGrid> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma {sigma} must be nonnegative"
        )));
    }
    if sigma == 0.0 {
        return Ok(g.clone());
    }
    let lat = &g.lattice;
    let mut values = g.values.clone();
    for axis in 0..lat.dim() {
        let w = gaussian_weights(sigma, lat.spacing()[axis], lat.shape()[axis]);
        for comp in values.iter_mut() {
            let src = comp.clone();
            for (i, out) in comp.iter_mut().enumerate() {
                let mut acc = w[0] * src[i];
                for (k, wk) in w.iter().enumerate().skip(1) {
                    let k = k as isize;
                    acc += wk * (src[lat.shift(i, axis, k)] + src[lat.shift(i, axis, -k)]);
                }
                *out = acc;
            }
        }
    }
    let out = GraphGrid::new(lat.clone(), values, g.time)?;
    let (before, after) = (max_slope(g), max_slope(&out));
    if after > before + 1e-10 {
        return Err(Error::ConditionViolated {
            time: g.time,
            index: 0,
            detail: format!("mollification raised max |df| from {before} to {after}"),
        });
    }
    Ok(out)
}

/// Seeded coefficients `c_k ~ U(−1, 1) / (1 + |k|²)` for wave vectors with
/// entries in `[−modes, modes]`.
fn fourier_terms(n: usize, modes: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec<f64>, f64, f64)> {
    let range = -(modes as i64)..=(modes as i64);
    let mut terms = Vec::new();
    let mut k = vec![-(modes as i64); n];
    loop {
        if k.iter().any(|&c| c != 0) {
            let k2: i64 = k.iter().map(|c| c * c).sum();
            let scale = 1.0 / (1.0 + k2 as f64);
            terms.push((
                k.iter().map(|&c| c as f64).collect(),
                scale * rng.gen_range(-1.0..1.0),
                scale * rng.gen_range(-1.0..1.0),
            ));
        }
        let mut axis = 0;
        loop {
            if axis == n {
                return terms;
            }
            k[axis] += 1;
            if range.contains(&k[axis]) {
                break;
            }
            k[axis] = -(modes as i64);
            axis += 1;
        }
    }
}

fn fourier_sum(terms: &[(Vec<f64>, f64, f64)], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|(k, a, b)| {
            let phase: f64 = k.iter().zip(x).map(|(k, x)| k * x).sum();
            a * phase.cos() + b * phase.sin()
        })
        .sum()
}

/// Band-limited seeded graph over `[0, 2π)ⁿ`; amplitude 0 gives the flat graph.
pub fn random_fourier(
    n: usize,
    m: usize,
    points: usize,
    modes: usize,
    amplitude: f64,
    seed: u64,
) -> Result<GraphGrid> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "amplitude {amplitude} must be nonnegative"
        )));
    }
    let lat = Lattice::periodic(vec![points; n], &vec![2.0 * PI; n])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..m)
        .map(|_| {
            let terms = fourier_terms(n, modes, &mut rng);
            (0..lat.len())
                .map(|i| amplitude * fourier_sum(&terms, &lat.coords(i)))
                .collect()
        })
        .collect();
    GraphGrid::new(lat, values, 0.0)
}

/// Unit circle with seeded radial perturbation `1 + amplitude · Σ c_k e^{ikθ}`.
pub fn perturbed_circle(
    points: usize,
    modes: usize,
    amplitude: f64,
    seed: u64,
) -> Result<ImmersionGrid> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "amplitude {amplitude} must be nonnegative"
        )));
    }
    let lat = Lattice::periodic(vec![points], &[2.0 * PI])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = fourier_terms(1, modes, &mut rng);
    let mut pos = vec![vec![0.0; points]; 2];
    for i in 0..points {
        let t = lat.coord(i, 0);
        let r = 1.0 + amplitude * fourier_sum(&terms, &[t]);
        pos[0][i] = r * t.cos();
        pos[1][i] = r * t.sin();
    }
    ImmersionGrid::new(lat, 1, pos, 0.0)
}

/// `q(x) = (x₁² + x₂² − x₃² − x₄², 2(x₁x₃ + x₂x₄), 2(x₂x₃ − x₁x₄))`, the Hopf
/// quadratic with `|q(x)| = |x|²`.
fn hopf_quadratic(x: &[f64]) -> [f64; 3] {
    [
        x[0] * x[0] + x[1] * x[1] - x[2] * x[2] - x[3] * x[3],
        2.0 * (x[0] * x[2] + x[1] * x[3]),
        2.0 * (x[1] * x[2] - x[0] * x[3]),
    ]
}

fn hopf_jacobian(x: &[f64]) -> [[f64; 4]; 3] {
    [
        [2.0 * x[0], 2.0 * x[1], -2.0 * x[2], -2.0 * x[3]],
        [2.0 * x[2], 2.0 * x[3], 2.0 * x[0], 2.0 * x[1]],
        [-2.0 * x[3], 2.0 * x[2], 2.0 * x[1], -2.0 * x[0]],
    ]
}

const LO_FACTOR: f64 = 1.118_033_988_749_895; // √5 / 2

/// The cone `f(x) = (√5/2) q(x) / |x|` over ℝ⁴ with values in ℝ³; `f(0) = 0`.
pub fn lawson_osserman_map(x: &[f64]) -> [f64; 3] {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return [0.0; 3];
    }
    hopf_quadratic(x).map(|q| LO_FACTOR * q / r)
}

/// Jacobian (3 × 4) of [`lawson_osserman_map`] away from the origin.
pub fn lawson_osserman_jacobian(x: &[f64]) -> DMatrix<f64> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let r = r2.sqrt();
    let q = hopf_quadratic(x);
    let dq = hopf_jacobian(x);
    DMatrix::from_fn(3, 4, |a, i| {
        LO_FACTOR * (dq[a][i] / r - q[a] * x[i] / (r2 * r))
    })
}

/// Quintic smoothstep from 1 at `r ≤ inner` to 0 at `r ≥ outer`.
fn window(r: f64, inner: f64, outer: f64) -> f64 {
    let s = ((r - inner) / (outer - inner)).clamp(0.0, 1.0);
    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Lawson–Osserman cone sampled on the periodic box `[−L/2, L/2)⁴`, `L = box_scale`,
/// windowed smoothly to zero between radii `0.4 L` and `0.45 L`.
pub fn lawson_osserman(points: usize, box_scale: f64) -> Result<GraphGrid> {
    check_positive("box_scale", box_scale)?;
    let h = box_scale / points as f64;
    let lat = Lattice::new(vec![points; 4], vec![h; 4], vec![-0.5 * box_scale; 4])?;
    let (inner, outer) = (LO_WINDOW.0 * box_scale, LO_WINDOW.1 * box_scale);
    let mut values = vec![vec![0.0; lat.len()]; 3];
    for i in 0..lat.len() {
        let x = lat.coords(i);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let w = window(r, inner, outer);
        if w > 0.0 {
            let f = lawson_osserman_map(&x);
            for a in 0..3 {
                values[a][i] = w * f[a];
            }
        }
    }
    GraphGrid::new(lat, values, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::ConstantNForm;
    use crate::geometry::{GeometrySample, Surface};

    fn jacobian_star_omega(df: &DMatrix<f64>) -> f64 {
        let n = df.ncols();
        let g = DMatrix::identity(n, n) + df.transpose() * df;
        1.0 / g.determinant().sqrt()
    }

    #[test]
    fn exact_fixtures() {
        let c = circle(1.0, 256).unwrap();
        assert!(
            (0..256).all(|i| (c.point(i).iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14)
        );
        let t = clifford_torus(1.0, 1.0, 64).unwrap();
        for i in 0..t.lattice.len() {
            let r2: f64 = t.point(i).iter().map(|x| x * x).sum();
            assert!((r2 - 2.0).abs() < 1e-13);
        }
        let c4 = circle_in(2.0, 32, 4).unwrap();
        assert_eq!(c4.codim, 3);
    }

    #[test]
    fn sphere_mean_curvature_is_two_over_radius() {
        let s = sphere(2.0, 128).unwrap();
        let h = 2.0 * PI / 128.0;
        for i in (0..s.lattice.len()).filter(|&i| s.included(i)) {
            let hn = GeometrySample::at(&s, i).unwrap().mean_curvature().norm();
            assert!((hn - 1.0).abs() < 10.0 * h * h, "{hn}");
        }
        assert!((0..s.lattice.len()).any(|i| !s.included(i)));
    }

    #[test]
    fn corner_slope_and_star_omega() {
        for (n, m, s) in [
            (1, 1, 0.75),
            (1, 2, 0.75),
            (2, 1, 0.75),
            (2, 2, 0.5),
            (1, 1, 1.0),
        ] {
            let g = corner_graph(n, m, s, 40, 3).unwrap();
            assert!((max_slope(&g) - s).abs() < 1e-12, "{n} {m}");
            let expected = corner_min_star_omega(n, m, s);
            let form = ConstantNForm::base(n, n + m);
            let mut hits = 0;
            let mut min = f64::INFINITY;
            for i in 0..g.lattice.len() {
                let v = GeometrySample::at(&g, i).unwrap().star_omega(&form);
                min = min.min(v);
                // at points whose stencils straddle no kink, *Ω is exactly the predicted value
                if (singular_values(&g.differential(i))[0] - s).abs() < 1e-12
                    && singular_values(&g.differential(i))
                        .iter()
                        .all(|l| (l - s).abs() < 1e-12)
                {
                    assert!((v - expected).abs() < 1e-10);
                    hits += 1;
                }
            }
            assert!(hits > 0);
            assert!(min >= expected - 1e-12);
        }
        assert!((corner_min_star_omega(2, 2, 0.5) - 0.8).abs() < 1e-15);
        assert!((corner_min_star_omega(1, 1, 1.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let flat = corner_graph(2, 2, 0.0, 16, 1).unwrap();
        assert!(flat.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn mollify_keeps_lipschitz_bound() {
        let g = corner_graph(2, 2, 0.5, 32, 9).unwrap();
        assert_eq!(mollify(&g, 0.0).unwrap(), g);
        let h = g.lattice.min_spacing();
        let m = mollify(&g, 2.0 * h).unwrap();
        assert!(max_slope(&m) <= 0.5 + 1e-10);
        let form = ConstantNForm::base(2, 4);
        let min = |g: &GraphGrid| {
            (0..g.lattice.len())
                .map(|i| GeometrySample::at(g, i).unwrap().star_omega(&form))
                .fold(f64::INFINITY, f64::min)
        };
        assert!(min(&m) >= min(&g) - 1e-8);
        assert!(mollify(&g, -1.0).is_err());
    }

    #[test]
    fn mollified_constant_is_unchanged() {
        let lat = Lattice::periodic(vec![16], &[1.0]).unwrap();
        let g = GraphGrid::new(lat, vec![vec![0.3; 16]], 0.0).unwrap();
        let m = mollify(&g, 0.1).unwrap();
        assert!(m.values[0].iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn generators_are_deterministic() {
        let a = random_fourier(2, 2, 16, 2, 0.1, 4).unwrap();
        assert_eq!(a, random_fourier(2, 2, 16, 2, 0.1, 4).unwrap());
        assert_ne!(a, random_fourier(2, 2, 16, 2, 0.1, 5).unwrap());
        assert_eq!(
            corner_graph(2, 1, 0.3, 16, 2).unwrap(),
            corner_graph(2, 1, 0.3, 16, 2).unwrap()
        );
        assert!(random_fourier(1, 1, 16, 3, 0.0, 1).unwrap().values[0]
            .iter()
            .all(|v| *v == 0.0));
        let c = perturbed_circle(32, 3, 0.0, 1).unwrap();
        assert_eq!(c, circle(1.0, 32).unwrap());
    }

    #[test]
    fn random_fourier_slope_is_linear_in_amplitude() {
        let a = max_slope(&random_fourier(2, 1, 32, 3, 1e-3, 11).unwrap());
        let b = max_slope(&random_fourier(2, 1, 32, 3, 2e-3, 11).unwrap());
        assert!((b / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lawson_osserman_cone_properties() {
        assert_eq!(lawson_osserman_map(&[0.0; 4]), [0.0; 3]);
        let x = [0.3, -0.2, 0.1, 0.25];
        let x2 = x.map(|v| 2.0 * v);
        let (f1, f2) = (lawson_osserman_map(&x), lawson_osserman_map(&x2));
        for a in 0..3 {
            assert!((f2[a] - 2.0 * f1[a]).abs() < 1e-14);
        }
        let s1 = jacobian_star_omega(&lawson_osserman_jacobian(&x));
        let s2 = jacobian_star_omega(&lawson_osserman_jacobian(&x2));
        assert!((s1 - s2).abs() < 1e-8);
        // Jacobian against central differences of the map
        let j = lawson_osserman_jacobian(&x);
        let e = 1e-6;
        for i in 0..4 {
            let mut p = x;
            let mut q = x;
            p[i] += e;
            q[i] -= e;
            let (fp, fq) = (lawson_osserman_map(&p), lawson_osserman_map(&q));
            for a in 0..3 {
                assert!(((fp[a] - fq[a]) / (2.0 * e) - j[(a, i)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn lawson_osserman_grid() {
        let g = lawson_osserman(16, 2.0).unwrap();
        let origin = 8 * (1 + 16 + 16 * 16 + 16 * 16 * 16);
        assert_eq!(g.lattice.coords(origin), vec![0.0; 4]);
        assert!(g.values.iter().all(|c| c[origin] == 0.0));
        // corner of the box lies outside the window
        assert!(g.values.iter().all(|c| c[0] == 0.0));
    }

    #[test]
    fn spec_round_trip() {
        let spec = GeneratorSpec::CornerGraph {
            n: 2,
            m: 2,
            slope: 0.5,
            points: 32,
            seed: 7,
            sigma_cells: 2.0,
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"corner_graph\""));
        let back: GeneratorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.seed(), Some(7));
        assert!(back.generate().unwrap().is_graph());
        assert!(!back.is_analytic());
        let finer = back.with_points(64);
        assert_eq!(finer.points(), 64);
        assert_eq!(finer.seed(), Some(7));
    }
}
