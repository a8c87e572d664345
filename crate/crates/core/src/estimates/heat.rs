//! The heat operator `(d/dt − Δ)` applied to scalar fields along a recorded
//! trajectory.
//!
//! Grid points of a graph flow move vertically rather than normally, so the
//! grid-fixed time derivative is corrected by the tangential velocity:
//! `dQ/dt = ∂_t Q − τ^a ∂_a Q` with `τ^a = g^{ab} ⟨V, ∂_b F⟩`. For parametric
//! flows the velocity is normal and the correction only removes
//! discretization-level tangential drift.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{velocity, State, Trajectory};
use crate::geometry::{diff1, laplacian_at, sample_all, GeometrySample, Surface};

/// A scalar field evaluated pointwise from the geometry at a lattice point.
pub type FieldFn<'a> = dyn Fn(&State, usize, &GeometrySample) -> Result<f64> + Sync + 'a;

/// Weights of the three-point derivative at the middle of `(t0, t1, t2)`.
pub fn centered_weights(t0: f64, t1: f64, t2: f64) -> [f64; 3] {
    let h1 = t1 - t0;
    let h2 = t2 - t1;
    [
        -h2 / (h1 * (h1 + h2)),
        (h2 - h1) / (h1 * h2),
        h1 / (h2 * (h1 + h2)),
    ]
}

/// Fields and their heat operator at one snapshot.
pub struct HeatData {
    pub time: f64,
    pub snapshot: usize,
    pub samples: Vec<GeometrySample>,
    /// `values[f][i]`: field `f` at point `i` of the middle snapshot.
    pub values: Vec<Vec<f64>>,
    /// `lhs[f][i] = (d/dt − Δ) Q_f` at point `i`.
    pub lhs: Vec<Vec<f64>>,
}

fn evaluate_fields(
    state: &State,
    samples: &[GeometrySample],
    fields: &[&FieldFn],
) -> Result<Vec<Vec<f64>>> {
    fields
        .iter()
        .map(|f| {
            (0..state.len())
                .into_par_iter()
                .map(|i| f(state, i, &samples[i]))
                .collect()
        })
        .collect()
}

/// Ambient velocity of each grid point: `F_t` for parametric states and
/// `(0, f_t)` for graphs.
fn ambient_velocity(state: &State) -> Result<Vec<DVector<f64>>> {
    let v = velocity(state)?;
    let n = state.intrinsic_dim();
    let amb = state.ambient_dim();
    Ok((0..state.len())
        .map(|i| {
            DVector::from_fn(amb, |a, _| {
                if state.is_graph() {
                    if a < n {
                        0.0
                    } else {
                        v[a - n][i]
                    }
                } else {
                    v[a][i]
                }
            })
        })
        .collect())
}

/// `(d/dt − Δ)` of every field at scheduled snapshot `k`, using snapshots
/// `k − 1` and `k + 1` for the time derivative.
pub fn heat_operator(traj: &Trajectory, k: usize, fields: &[&FieldFn]) -> Result<HeatData> {
    if k == 0 || k + 1 >= traj.len() {
        return Err(Error::InsufficientSnapshots {
            needed: k + 2,
            found: traj.len(),
        });
    }
    let s0 = &traj.snapshots[k - 1].state;
    let s1 = &traj.snapshots[k].state;
    let s2 = &traj.snapshots[k + 1].state;
    let samples0 = sample_all(s0)?;
    let samples1 = sample_all(s1)?;
    let samples2 = sample_all(s2)?;
    let q0 = evaluate_fields(s0, &samples0, fields)?;
    let q1 = evaluate_fields(s1, &samples1, fields)?;
    let q2 = evaluate_fields(s2, &samples2, fields)?;
    let w = centered_weights(s0.time(), s1.time(), s2.time());
    let vel = ambient_velocity(s1)?;
    let lat = s1.lattice();
    let n = lat.dim();
    let lhs = (0..fields.len())
        .map(|f| {
            (0..s1.len())
                .into_par_iter()
                .map(|i| {
                    let s = &samples1[i];
                    let dt = w[0] * q0[f][i] + w[1] * q1[f][i] + w[2] * q2[f][i];
                    let tau = s.tangential_coordinates(&vel[i]);
                    let drift: f64 = (0..n).map(|a| tau[a] * diff1(lat, &q1[f], i, a)).sum();
                    let lap = laplacian_at(lat, &q1[f], i, &s.g_inv, &s.christoffel);
                    dt - drift - lap
                })
                .collect()
        })
        .collect();
    Ok(HeatData {
        time: s1.time(),
        snapshot: k,
        samples: samples1,
        values: q1,
        lhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_differentiate_quadratics_exactly() {
        let (t0, t1, t2) = (0.1, 0.13, 0.2);
        let w = centered_weights(t0, t1, t2);
        let f = |t: f64| 3.0 * t * t - 2.0 * t + 1.0;
        let d = w[0] * f(t0) + w[1] * f(t1) + w[2] * f(t2);
        assert!((d - (6.0 * t1 - 2.0)).abs() < 1e-10);
    }

    #[test]
    fn uniform_weights_are_centered_difference() {
        let w = centered_weights(0.0, 0.5, 1.0);
        assert!((w[0] + 1.0).abs() < 1e-15 && w[1].abs() < 1e-15 && (w[2] - 1.0).abs() < 1e-15);
    }
}
