//! Constant n-forms on ℝⁿ⁺ᵐ, their Grassmann evaluation, and the averaged
//! form built from local tangent-plane volume forms.

mod averaged;
mod constants;

pub use averaged::{
    cutoff, partition, select_centers, AveragedForm, CenterCheck, CutoffJet, CutoffProfile,
    FormJet, KConditionReport, LocalBounds, PartitionProbe, PartitionTerm, Smoothstep,
    SurfaceSamples,
};
pub use constants::{compute_constants, ConstantPipeline, EpsilonRule, K0_SCAN_STEP};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All strictly increasing multi-indices of length `n` from `0..ambient`, in lexicographic order.
pub fn multi_indices(n: usize, ambient: usize) -> Vec<Vec<usize>> {
    (0..ambient).combinations(n).collect()
}

/// A constant n-form `Σ_I Ω_I dy^{I₁} ∧ … ∧ dy^{Iₙ}`, coefficients in
/// lexicographic multi-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantNForm {
    pub n: usize,
    pub ambient: usize,
    pub coefficients: Vec<f64>,
}

impl ConstantNForm {
    pub fn zero(n: usize, ambient: usize) -> Self {
        let len = multi_indices(n, ambient).len();
        Self {
            n,
            ambient,
            coefficients: vec![0.0; len],
        }
    }

    pub fn from_coefficients(n: usize, ambient: usize, coefficients: Vec<f64>) -> Result<Self> {
        let expected = multi_indices(n, ambient).len();
        if coefficients.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a {n}-form on R^{ambient} (expected {expected})",
                coefficients.len()
            )));
        }
        Ok(Self {
            n,
            ambient,
            coefficients,
        })
    }

    /// `dy¹ ∧ … ∧ dyⁿ`, the volume form of the base plane.
    pub fn base(n: usize, ambient: usize) -> Self {
        let mut form = Self::zero(n, ambient);
        form.coefficients[0] = 1.0;
        form
    }

    /// L² norm squared of the coefficient vector.
    pub fn norm2(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum()
    }

    pub fn scaled_add(&mut self, scale: f64, other: &ConstantNForm) {
        for (a, b) in self.coefficients.iter_mut().zip(&other.coefficients) {
            *a += scale * b;
        }
    }

    /// `Ω(v₁, …, vₙ) = Σ_I Ω_I det(v_i^{I_j})`.
    pub fn evaluate(&self, vectors: &[DVector<f64>]) -> f64 {
        debug_assert_eq!(vectors.len(), self.n);
        let n = self.n;
        let mut total = 0.0;
        for (coef, idx) in self.coefficients.iter().zip(multi_indices(n, self.ambient)) {
            if *coef == 0.0 {
                continue;
            }
            total += coef * minor(vectors, &idx);
        }
        total
    }
}

/// Determinant of the `n × n` matrix `v_i^{I_j}`.
fn minor(vectors: &[DVector<f64>], idx: &[usize]) -> f64 {
    let n = idx.len();
    match n {
        1 => vectors[0][idx[0]],
        2 => vectors[0][idx[0]] * vectors[1][idx[1]] - vectors[0][idx[1]] * vectors[1][idx[0]],
        _ => DMatrix::from_fn(n, n, |i, j| vectors[i][idx[j]]).determinant(),
    }
}

/// Free-function form of [`ConstantNForm::evaluate`].
pub fn evaluate(form: &ConstantNForm, vectors: &[DVector<f64>]) -> f64 {
    form.evaluate(vectors)
}

/// Volume form of the oriented plane spanned by an orthonormal frame: its
/// coefficients are the `n × n` minors of the frame matrix.
pub fn plane_volume_form(frame: &[DVector<f64>]) -> Result<ConstantNForm> {
    let n = frame.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty frame".into()));
    }
    let ambient = frame[0].len();
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((frame[i].dot(&frame[j]) - target).abs());
        }
    }
    if defect > 1e-8 {
        return Err(Error::NonOrthonormalFrame { defect });
    }
    let coefficients = multi_indices(n, ambient)
        .iter()
        .map(|idx| minor(frame, idx))
        .collect();
    Ok(ConstantNForm {
        n,
        ambient,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Sign of a permutation given as a slice, 0 if it has repeats.
    fn parity(p: &[usize]) -> f64 {
        let mut sign = 1.0;
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                if p[i] == p[j] {
                    return 0.0;
                }
                if p[i] > p[j] {
                    sign = -sign;
                }
            }
        }
        sign
    }

    /// Leibniz expansion over every n-tuple of ambient indices using the
    /// antisymmetric extension of the coefficients.
    fn brute_force(form: &ConstantNForm, vectors: &[DVector<f64>]) -> f64 {
        let n = form.n;
        let amb = form.ambient;
        let table = multi_indices(n, amb);
        let mut total = 0.0;
        for tuple in (0..n).map(|_| 0..amb).multi_cartesian_product() {
            let s = parity(&tuple);
            if s == 0.0 {
                continue;
            }
            let mut sorted = tuple.clone();
            sorted.sort_unstable();
            let k = table.iter().position(|t| *t == sorted).unwrap();
            let mut prod = s * form.coefficients[k];
            for (i, &a) in tuple.iter().enumerate() {
                prod *= vectors[i][a];
            }
            total += prod;
        }
        total
    }

    fn axis(ambient: usize, k: usize) -> DVector<f64> {
        let mut v = DVector::zeros(ambient);
        v[k] = 1.0;
        v
    }

    #[test]
    fn base_form_on_base_axes_is_one() {
        let form = ConstantNForm::base(2, 4);
        assert_eq!(form.evaluate(&[axis(4, 0), axis(4, 1)]), 1.0);
    }

    #[test]
    fn swapping_arguments_flips_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let form = ConstantNForm::from_coefficients(
            2,
            4,
            (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let u = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let v = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let a = form.evaluate(&[u.clone(), v.clone()]);
        let b = form.evaluate(&[v, u]);
        assert!((a + b).abs() < 1e-14);
    }

    #[test]
    fn evaluation_matches_leibniz_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, amb) in [(1, 3), (2, 4), (3, 5), (4, 7)] {
            let len = multi_indices(n, amb).len();
            let form = ConstantNForm::from_coefficients(
                n,
                amb,
                (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let vectors: Vec<_> = (0..n)
                .map(|_| DVector::from_fn(amb, |_, _| rng.gen_range(-1.0..1.0)))
                .collect();
            let fast = form.evaluate(&vectors);
            let slow = brute_force(&form, &vectors);
            assert!(
                (fast - slow).abs() < 1e-12,
                "n={n} amb={amb}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn plane_form_of_base_axes_is_base_form() {
        let form = plane_volume_form(&[axis(3, 0), axis(3, 1)]).unwrap();
        assert_eq!(form, ConstantNForm::base(2, 3));
    }

    #[test]
    fn rotated_plane_coefficients_are_minors() {
        // plane in R³ spanned by e1 and (0, cos a, sin a)
        let a: f64 = 0.7;
        let u = axis(3, 0);
        let v = DVector::from_vec(vec![0.0, a.cos(), a.sin()]);
        let form = plane_volume_form(&[u.clone(), v.clone()]).unwrap();
        // indices (0,1), (0,2), (1,2)
        let expected = [a.cos(), a.sin(), 0.0];
        for (c, e) in form.coefficients.iter().zip(expected) {
            assert!((c - e).abs() < 1e-15);
        }
        assert!((form.norm2() - 1.0).abs() < 1e-14);
        assert!((form.evaluate(&[u, v]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_orthonormal_frame_rejected() {
        let err = plane_volume_form(&[axis(3, 0), DVector::from_vec(vec![1.0, 1.0, 0.0])]);
        assert!(matches!(err, Err(Error::NonOrthonormalFrame { .. })));
    }
}
