//! Directed and symmetric Hausdorff distances between finite point clouds.

use crate::error::{Error, Result};

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `max_{a ∈ A} min_{b ∈ B} dist(a, b)` under an arbitrary metric.
///
/// The inner search starts at the same index in `B` and stops as soon as a
/// point closer than the running maximum is found, so clouds that are
/// index-aligned (successive snapshots of one grid) cost close to linear time.
pub fn directed_hausdorff_by<D>(a: &[Vec<f64>], b: &[Vec<f64>], dist: D) -> Result<f64>
where
    D: Fn(&[f64], &[f64]) -> f64,
{
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut worst: f64 = 0.0;
    for (i, p) in a.iter().enumerate() {
        let start = i.min(b.len() - 1);
        let mut best = f64::INFINITY;
        for q in b[start..].iter().chain(&b[..start]) {
            let d = dist(p, q);
            if d < best {
                best = d;
                if best <= worst {
                    break;
                }
            }
        }
        worst = worst.max(best);
    }
    Ok(worst)
}

/// Directed Euclidean Hausdorff distance from `a` to `b`.
pub fn directed_hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    directed_hausdorff_by(a, b, euclidean)
}

/// Symmetric Euclidean Hausdorff distance.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}
