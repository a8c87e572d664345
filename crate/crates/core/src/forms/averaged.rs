//! The averaged n-form: a maximal disjoint covering of the surface by balls,
//! fitted tangent planes at the centers, radial cutoffs, a partition of
//! unity, and the form `Ω = Σ p_ν Ω_ν` with its first and second derivatives.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{plane_volume_form, ConstantNForm};
use crate::error::{Error, Result};
use crate::geometry::{GeometrySample, Surface};

/// Points on the surface, with the oriented tangent frame at each when known.
#[derive(Debug, Clone)]
pub struct SurfaceSamples {
    pub n: usize,
    pub points: Vec<DVector<f64>>,
    pub tangents: Option<Vec<Vec<DVector<f64>>>>,
}

impl SurfaceSamples {
    pub fn from_points(n: usize, points: Vec<DVector<f64>>) -> Self {
        Self {
            n,
            points,
            tangents: None,
        }
    }

    /// Every included lattice point with its Gram–Schmidt tangent frame.
    pub fn from_surface(surface: &dyn Surface) -> Result<Self> {
        let mut points = Vec::new();
        let mut tangents = Vec::new();
        for idx in 0..surface.len() {
            if !surface.included(idx) {
                continue;
            }
            let s = GeometrySample::at(surface, idx)?;
            points.push(DVector::from_vec(surface.point(idx)));
            tangents.push(s.frames()?.tangent);
        }
        Ok(Self {
            n: surface.intrinsic_dim(),
            points,
            tangents: Some(tangents),
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Polynomial smoothstep `S` on `[0, 1]` with `S(0) = 0`, `S(1) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Smoothstep {
    /// `6s⁵ − 15s⁴ + 10s³`, C² at both ends.
    #[default]
    Quintic,
    /// `−20s⁷ + 70s⁶ − 84s⁵ + 35s⁴`, C³ at both ends.
    Septic,
}

impl Smoothstep {
    /// `(S, S', S'')` at `s ∈ [0, 1]`.
    pub fn eval(self, s: f64) -> (f64, f64, f64) {
        let t = 1.0 - s;
        match self {
            Smoothstep::Quintic => (
                s * s * s * (10.0 - 15.0 * s + 6.0 * s * s),
                30.0 * s * s * t * t,
                60.0 * s * t * (1.0 - 2.0 * s),
            ),
            Smoothstep::Septic => (
                s.powi(4) * (35.0 - 84.0 * s + 70.0 * s * s - 20.0 * s.powi(3)),
                140.0 * (s * t).powi(3),
                420.0 * (s * t).powi(2) * (1.0 - 2.0 * s),
            ),
        }
    }

    /// `max |S'|`, attained at `s = 1/2`.
    pub fn max_slope(self) -> f64 {
        match self {
            Smoothstep::Quintic => 1.875,
            Smoothstep::Septic => 2.1875,
        }
    }

    /// `max |S''|`, attained at `s = 1/2 ± 1/(2√3)` and `s = 1/2 ± 1/√20`.
    pub fn max_curvature(self) -> f64 {
        match self {
            Smoothstep::Quintic => 10.0 / 3f64.sqrt(),
            Smoothstep::Septic => 840.0 / (25.0 * 20f64.sqrt()),
        }
    }
}

/// Radial profile `φ(ρ) = 1 − S((ρ − a r₀)/((1 − a) r₀))` with a polynomial
/// smoothstep `S`; `a` is the plateau fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub plateau_fraction: f64,
    #[serde(default)]
    pub smoothstep: Smoothstep,
}

impl Default for CutoffProfile {
    fn default() -> Self {
        Self {
            plateau_fraction: 0.8,
            smoothstep: Smoothstep::Quintic,
        }
    }
}

impl CutoffProfile {
    pub fn with_smoothstep(smoothstep: Smoothstep) -> Self {
        Self {
            smoothstep,
            ..Self::default()
        }
    }

    /// `(φ, φ', φ'')` as functions of the distance `ρ` to the center.
    pub fn radial(&self, rho: f64, r0: f64) -> (f64, f64, f64) {
        let a = self.plateau_fraction;
        if rho <= a * r0 {
            return (1.0, 0.0, 0.0);
        }
        if rho >= r0 {
            return (0.0, 0.0, 0.0);
        }
        let w = (1.0 - a) * r0;
        let (v, d1, d2) = self.smoothstep.eval((rho - a * r0) / w);
        (1.0 - v, -d1 / w, -d2 / (w * w))
    }

    /// `|Dφ| ≤ c₁ / r₀`.
    pub fn c1(&self) -> f64 {
        self.smoothstep.max_slope() / (1.0 - self.plateau_fraction)
    }

    /// `|D²φ|_F ≤ c₂ / r₀²` in ambient dimension `ambient`; combines the radial
    /// and tangential Hessian eigenvalue bounds.
    pub fn c2(&self, ambient: usize) -> f64 {
        let a = self.plateau_fraction;
        let radial = self.smoothstep.max_curvature() / ((1.0 - a) * (1.0 - a));
        let tangential = self.smoothstep.max_slope() / ((1.0 - a) * a);
        (radial * radial + (ambient as f64 - 1.0) * tangential * tangential).sqrt()
    }
}

/// Cutoff value, gradient and Hessian at an ambient point.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffJet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

pub fn cutoff(
    y: &DVector<f64>,
    center: &DVector<f64>,
    r0: f64,
    profile: &CutoffProfile,
) -> CutoffJet {
    let d = y.len();
    let diff = y - center;
    let rho = diff.norm();
    let (value, d1, d2) = profile.radial(rho, r0);
    if d1 == 0.0 && d2 == 0.0 {
        return CutoffJet {
            value,
            gradient: DVector::zeros(d),
            hessian: DMatrix::zeros(d, d),
        };
    }
    let u = diff / rho;
    let uu = &u * u.transpose();
    let hessian = d2 * &uu + (d1 / rho) * (DMatrix::identity(d, d) - uu);
    CutoffJet {
        value,
        gradient: d1 * u,
        hessian,
    }
}

/// One nonzero term of the partition of unity at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTerm {
    pub center: usize,
    pub p: f64,
    pub dp: DVector<f64>,
    pub d2p: DMatrix<f64>,
}

/// `Ω(y)` with its ambient derivatives: `grad[A] = ∂_A Ω`, `hess[A][B] = ∂_A ∂_B Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormJet {
    pub value: ConstantNForm,
    pub grad: Vec<ConstantNForm>,
    pub hess: Vec<Vec<ConstantNForm>>,
}

impl FormJet {
    /// `D_v Ω`.
    pub fn directional(&self, v: &DVector<f64>) -> ConstantNForm {
        let mut out = ConstantNForm::zero(self.value.n, self.value.ambient);
        for (a, g) in self.grad.iter().enumerate() {
            if v[a] != 0.0 {
                out.scaled_add(v[a], g);
            }
        }
        out
    }

    /// `Σ_k D²Ω(e_k, e_k)` over the given tangent frame.
    pub fn tangential_trace(&self, tangent: &[DVector<f64>]) -> ConstantNForm {
        let mut out = ConstantNForm::zero(self.value.n, self.value.ambient);
        for e in tangent {
            for (a, row) in self.hess.iter().enumerate() {
                for (b, h) in row.iter().enumerate() {
                    let w = e[a] * e[b];
                    if w != 0.0 {
                        out.scaled_add(w, h);
                    }
                }
            }
        }
        out
    }
}

/// Profile and partition constants: `|Dφ| ≤ c₁/r₀`, `|D²φ| ≤ c₂/r₀²`,
/// `|Dp| ≤ c₃/r₀`, `|D²p| ≤ c₄/r₀²` given at most `overlap` active cutoffs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalBounds {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub overlap: usize,
}

impl LocalBounds {
    /// Quotient-rule bounds using `Σφ ≥ 1` and `0 ≤ φ ≤ 1` on the tube.
    pub fn from_profile(c1: f64, c2: f64, overlap: usize) -> Self {
        let m = overlap as f64;
        let c3 = (1.0 + m) * c1;
        let c4 = (1.0 + m) * c2 + 2.0 * m * c1 * c1 + 2.0 * m * m * c1 * c1;
        Self {
            c1,
            c2,
            c3,
            c4,
            overlap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenterCheck {
    pub center: usize,
    pub min_star_omega: f64,
    pub samples_in_ball: usize,
}

/// Per-center minima of `*Ω_{L_q}` over the samples in `B(q, r₀)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KConditionReport {
    pub threshold: f64,
    pub centers: Vec<CenterCheck>,
    pub min_star_omega: f64,
    pub passed: bool,
}

/// Result of probing the partition at random points of the `r₀/5` tube.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionProbe {
    pub points: usize,
    pub max_sum_defect: f64,
    pub max_gradient_sum: f64,
    pub max_dp: f64,
    pub max_d2p: f64,
    pub max_form_norm2: f64,
    pub dp_bound: f64,
    pub d2p_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AveragedFormDoc {
    n: usize,
    ambient: usize,
    r0: f64,
    profile: CutoffProfile,
    centers: Vec<Vec<f64>>,
    plane_frames: Vec<Vec<Vec<f64>>>,
}

/// `Ω = Σ_ν p_ν Ω_ν` over a covering by balls `B(q_ν, r₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AveragedFormDoc", into = "AveragedFormDoc")]
pub struct AveragedForm {
    pub n: usize,
    pub ambient: usize,
    pub r0: f64,
    pub profile: CutoffProfile,
    pub centers: Vec<DVector<f64>>,
    pub plane_frames: Vec<Vec<DVector<f64>>>,
    forms: Vec<ConstantNForm>,
}

impl TryFrom<AveragedFormDoc> for AveragedForm {
    type Error = Error;

    fn try_from(doc: AveragedFormDoc) -> Result<Self> {
        let centers = doc.centers.into_iter().map(DVector::from_vec).collect();
        let frames = doc
            .plane_frames
            .into_iter()
            .map(|f| f.into_iter().map(DVector::from_vec).collect())
            .collect();
        AveragedForm::new(doc.n, doc.ambient, doc.r0, doc.profile, centers, frames)
    }
}

impl From<AveragedForm> for AveragedFormDoc {
    fn from(f: AveragedForm) -> Self {
        Self {
            n: f.n,
            ambient: f.ambient,
            r0: f.r0,
            profile: f.profile,
            centers: f
                .centers
                .iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
            plane_frames: f
                .plane_frames
                .iter()
                .map(|fr| fr.iter().map(|v| v.iter().copied().collect()).collect())
                .collect(),
        }
    }
}

impl AveragedForm {
    pub fn new(
        n: usize,
        ambient: usize,
        r0: f64,
        profile: CutoffProfile,
        centers: Vec<DVector<f64>>,
        plane_frames: Vec<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(Error::InvalidArgument("r0 must be positive".into()));
        }
        if centers.len() != plane_frames.len() || centers.is_empty() {
            return Err(Error::InvalidArgument(
                "need one plane frame per center".into(),
            ));
        }
        let forms = plane_frames
            .iter()
            .map(|f| plane_volume_form(f))
            .collect::<Result<Vec<_>>>()?;
        if forms.iter().any(|f| f.n != n || f.ambient != ambient) {
            return Err(Error::InvalidArgument(
                "plane frame dimension mismatch".into(),
            ));
        }
        Ok(Self {
            n,
            ambient,
            r0,
            profile,
            centers,
            plane_frames,
            forms,
        })
    }

    /// Volume form `Ω_ν` of the plane at center `ν`.
    pub fn plane_form(&self, nu: usize) -> &ConstantNForm {
        &self.forms[nu]
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("averaged form serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Partition of unity `p_μ = φ_μ / Σ_ν φ_ν` with derivatives, over the active centers.
    pub fn partition(&self, y: &DVector<f64>) -> Result<Vec<PartitionTerm>> {
        partition(y, self)
    }

    pub fn at(&self, y: &DVector<f64>) -> Result<FormJet> {
        let d = self.ambient;
        let terms = self.partition(y)?;
        let zero = ConstantNForm::zero(self.n, d);
        let mut value = zero.clone();
        let mut grad = vec![zero.clone(); d];
        let mut hess = vec![vec![zero; d]; d];
        for t in &terms {
            let form = &self.forms[t.center];
            value.scaled_add(t.p, form);
            for a in 0..d {
                if t.dp[a] != 0.0 {
                    grad[a].scaled_add(t.dp[a], form);
                }
                for b in 0..d {
                    if t.d2p[(a, b)] != 0.0 {
                        hess[a][b].scaled_add(t.d2p[(a, b)], form);
                    }
                }
            }
        }
        Ok(FormJet { value, grad, hess })
    }

    /// `*Ω(y) = Ω(y)(e₁, …, eₙ)`.
    pub fn star_omega_at(&self, y: &DVector<f64>, tangent: &[DVector<f64>]) -> Result<f64> {
        let terms = self.partition(y)?;
        Ok(terms
            .iter()
            .map(|t| t.p * self.forms[t.center].evaluate(tangent))
            .sum())
    }

    /// Largest number of centers within `6r₀/5` of any sample, which bounds
    /// the active cutoffs anywhere in the `r₀/5` tube.
    pub fn overlap(&self, samples: &SurfaceSamples) -> usize {
        let reach = 1.2 * self.r0;
        samples
            .points
            .iter()
            .map(|p| {
                self.centers
                    .iter()
                    .filter(|c| distance2(p, c) < reach * reach)
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    pub fn local_bounds(&self, samples: &SurfaceSamples) -> LocalBounds {
        LocalBounds::from_profile(
            self.profile.c1(),
            self.profile.c2(self.ambient),
            self.overlap(samples),
        )
    }

    /// Per-center check of `*Ω_{L_q} > K` on `Σ ∩ B(q, r₀)`.
    pub fn check_k_condition(&self, samples: &SurfaceSamples, k: f64) -> Result<KConditionReport> {
        let tangents = samples
            .tangents
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("samples carry no tangent frames".into()))?;
        let mut centers = Vec::with_capacity(self.len());
        for (nu, q) in self.centers.iter().enumerate() {
            let mut min = f64::INFINITY;
            let mut count = 0;
            let frame = &self.plane_frames[nu];
            let r2 = self.r0 * self.r0;
            for (p, t) in samples.points.iter().zip(tangents) {
                if distance2(p, q) < r2 {
                    // Cauchy–Binet: the plane volume form on t is det⟨t_i, e_j⟩
                    let gram = DMatrix::from_fn(self.n, self.n, |i, j| t[i].dot(&frame[j]));
                    min = min.min(gram.determinant());
                    count += 1;
                }
            }
            centers.push(CenterCheck {
                center: nu,
                min_star_omega: min,
                samples_in_ball: count,
            });
        }
        let min_star_omega = centers
            .iter()
            .map(|c| c.min_star_omega)
            .fold(f64::INFINITY, f64::min);
        Ok(KConditionReport {
            threshold: k,
            passed: min_star_omega > k,
            min_star_omega,
            centers,
        })
    }

    /// Evaluates the partition at `count` seeded random points within `r₀/5`
    /// of the samples and compares against the quotient-rule bounds.
    pub fn probe_partition(
        &self,
        samples: &SurfaceSamples,
        count: usize,
        seed: u64,
    ) -> Result<PartitionProbe> {
        let bounds = self.local_bounds(samples);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.ambient;
        let mut probe = PartitionProbe {
            points: count,
            max_sum_defect: 0.0,
            max_gradient_sum: 0.0,
            max_dp: 0.0,
            max_d2p: 0.0,
            max_form_norm2: 0.0,
            dp_bound: bounds.c3 / self.r0,
            d2p_bound: bounds.c4 / (self.r0 * self.r0),
        };
        for _ in 0..count {
            let base = &samples.points[rng.gen_range(0..samples.len())];
            let dir = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let len = rng.gen_range(0.0..0.2) * self.r0;
            let y = base + dir.normalize() * len;
            let terms = self.partition(&y)?;
            let sum: f64 = terms.iter().map(|t| t.p).sum();
            let gsum = terms.iter().fold(DVector::zeros(d), |acc, t| acc + &t.dp);
            probe.max_sum_defect = probe.max_sum_defect.max((sum - 1.0).abs());
            probe.max_gradient_sum = probe.max_gradient_sum.max(gsum.norm());
            for t in &terms {
                probe.max_dp = probe.max_dp.max(t.dp.norm());
                probe.max_d2p = probe.max_d2p.max(t.d2p.norm());
            }
            probe.max_form_norm2 = probe.max_form_norm2.max(self.at(&y)?.value.norm2());
        }
        Ok(probe)
    }
}

/// Quotient-rule partition of unity; errors with [`Error::EmptyCover`] where
/// no cutoff is active.
pub fn partition(y: &DVector<f64>, form: &AveragedForm) -> Result<Vec<PartitionTerm>> {
    let d = form.ambient;
    let active: Vec<(usize, CutoffJet)> = form
        .centers
        .iter()
        .enumerate()
        .filter(|(_, q)| (y - *q).norm() < form.r0)
        .map(|(nu, q)| (nu, cutoff(y, q, form.r0, &form.profile)))
        .filter(|(_, c)| c.value > 0.0)
        .collect();
    let sum: f64 = active.iter().map(|(_, c)| c.value).sum();
    if !(sum > 0.0) {
        return Err(Error::EmptyCover);
    }
    let mut dsum = DVector::zeros(d);
    let mut d2sum = DMatrix::zeros(d, d);
    for (_, c) in &active {
        dsum += &c.gradient;
        d2sum += &c.hessian;
    }
    let s2 = sum * sum;
    let s3 = s2 * sum;
    Ok(active
        .into_iter()
        .map(|(nu, c)| {
            let p = c.value / sum;
            let dp = &c.gradient / sum - &dsum * (c.value / s2);
            let cross = &c.gradient * dsum.transpose();
            let d2p =
                &c.hessian / sum - (&cross + cross.transpose()) / s2 - &d2sum * (c.value / s2)
                    + (&dsum * dsum.transpose()) * (2.0 * c.value / s3);
            PartitionTerm {
                center: nu,
                p,
                dp,
                d2p,
            }
        })
        .collect())
}

fn gram_schmidt_axes(n: usize, ambient: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|i| {
            let mut v = DVector::zeros(ambient);
            v[i] = 1.0;
            v
        })
        .collect()
}

fn distance2(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Total-least-squares `n`-plane through the neighbors, or `None` when they
/// do not span `n` directions.
fn fit_plane(neighbors: &[&DVector<f64>], n: usize) -> Option<Vec<DVector<f64>>> {
    if neighbors.len() <= n {
        return None;
    }
    let d = neighbors[0].len();
    let k = neighbors.len();
    let mean = neighbors.iter().fold(DVector::zeros(d), |acc, p| acc + *p) / k as f64;
    let centered = DMatrix::from_fn(k, d, |r, c| neighbors[r][c] - mean[c]);
    let svd = centered.svd(false, true);
    let vt = svd.v_t?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    if order.len() < n {
        return None;
    }
    let scale = svd.singular_values[order[0]].max(1e-300);
    if svd.singular_values[order[n - 1]] < 1e-9 * scale {
        return None;
    }
    Some(order[..n].iter().map(|&r| vt.row(r).transpose()).collect())
}

fn orient(frame: &mut [DVector<f64>], reference: &[DVector<f64>]) {
    let n = frame.len();
    let m = DMatrix::from_fn(n, n, |i, j| frame[i].dot(&reference[j]));
    if m.determinant() < 0.0 {
        let last = n - 1;
        frame[last] = -frame[last].clone();
    }
}

/// Greedy maximal family of samples whose `r₀/5` balls are disjoint, with a
/// fitted tangent plane at each. Plane frames are oriented to agree with the
/// sample's tangent frame (or the base axes when no tangents are known).
pub fn select_centers(
    samples: &SurfaceSamples,
    r0: f64,
    profile: CutoffProfile,
) -> Result<AveragedForm> {
    if samples.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let n = samples.n;
    let ambient = samples.ambient_dim();
    let separation = 0.4 * r0;
    let mut chosen: Vec<usize> = Vec::new();
    for (i, p) in samples.points.iter().enumerate() {
        if chosen
            .iter()
            .all(|&c| distance2(p, &samples.points[c]) >= separation * separation)
        {
            chosen.push(i);
        }
    }
    let limit = 0.8 * r0;
    for (i, p) in samples.points.iter().enumerate() {
        let d = chosen
            .iter()
            .map(|&c| distance2(p, &samples.points[c]))
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        if d > limit {
            return Err(Error::CoverageFailure {
                index: i,
                distance: d,
                limit,
            });
        }
    }
    let base = gram_schmidt_axes(n, ambient);
    let mut frames = Vec::with_capacity(chosen.len());
    for &c in &chosen {
        let q = &samples.points[c];
        let neighbors: Vec<&DVector<f64>> = samples
            .points
            .iter()
            .filter(|p| distance2(p, q) < 0.04 * r0 * r0)
            .collect();
        let reference = samples
            .tangents
            .as_ref()
            .map(|t| t[c].clone())
            .unwrap_or_else(|| base.clone());
        let mut frame = fit_plane(&neighbors, n).unwrap_or_else(|| reference.clone());
        orient(&mut frame, &reference);
        frames.push(frame);
    }
    let centers = chosen.iter().map(|&c| samples.points[c].clone()).collect();
    AveragedForm::new(n, ambient, r0, profile, centers, frames)
}
