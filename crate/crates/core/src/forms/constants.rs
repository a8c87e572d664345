//! The chain of constants that controls the averaged-form barrier: from the
//! partition bounds `c₁…c₄` through the threshold pair `(K₀, K)` to the time
//! horizon `T`.

use serde::{Deserialize, Serialize};

use super::LocalBounds;
use crate::error::{Error, Result};

/// Grid spacing of the `K₀` scan over `(1/√2, 1)`.
pub const K0_SCAN_STEP: f64 = 1e-3;

/// How the slack `ε` is chosen from the gap `K − K₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum EpsilonRule {
    /// `ε = (K − K₀)/2`.
    #[default]
    HalfGap,
    /// `ε = f · (K − K₀)` with `0 < f < 1`.
    Fraction(f64),
}

impl EpsilonRule {
    fn epsilon(self, k0: f64, k: f64) -> Result<f64> {
        let f = match self {
            EpsilonRule::HalfGap => 0.5,
            EpsilonRule::Fraction(f) => f,
        };
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon fraction {f} not in (0, 1)"
            )));
        }
        Ok(f * (k - k0))
    }
}

/// Every constant of the barrier argument for one `(n, m, r₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantPipeline {
    pub n: usize,
    pub m: usize,
    pub r0: f64,
    pub overlap: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub k0: f64,
    pub k: f64,
    pub epsilon: f64,
    pub t0: f64,
    pub t1: f64,
    /// Horizon on which `*Ω > K − c₈√(1 − K²) − ε` and the ratio condition hold.
    pub t_final: f64,
}

impl ConstantPipeline {
    /// `c₈ √(1 − K²)`, the loss from the off-plane components.
    pub fn offplane_loss(&self) -> f64 {
        self.c8 * (1.0 - self.k * self.k).max(0.0).sqrt()
    }

    /// Lower bound on `*Ω` of the averaged form up to `T`.
    pub fn barrier_floor(&self) -> f64 {
        self.k - self.offplane_loss() - self.epsilon
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("constants serialize")
    }
}

fn combinatorial(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64
}

/// Smallest admissible `(K₀, K)` on the scan grid: `c₉ = K₀ − c₈√(1 − K₀²) > 0`
/// and `K ≥ max(K₀, 1 − c₉/5)` rounded up to the next grid point.
fn choose_thresholds(n: usize) -> Option<(f64, f64, f64)> {
    let c8 = combinatorial(n);
    let lo = std::f64::consts::FRAC_1_SQRT_2;
    let first = (lo / K0_SCAN_STEP).floor() as usize + 1;
    let last = (1.0 / K0_SCAN_STEP).round() as usize;
    let mut best: Option<(f64, f64, f64)> = None;
    for step in first..last {
        let k0 = step as f64 * K0_SCAN_STEP;
        let c9 = k0 - c8 * (1.0 - k0 * k0).sqrt();
        if c9 <= 0.0 {
            continue;
        }
        let floor = k0.max(1.0 - c9 / 5.0);
        let k = ((floor / K0_SCAN_STEP + 1e-9).floor() + 1.0) * K0_SCAN_STEP;
        if k >= 1.0 {
            continue;
        }
        if best.is_none_or(|(_, bk, _)| k < bk - 1e-12) {
            best = Some((k0, k, c9));
        }
    }
    best
}

/// Runs the constant chain; errors with [`Error::InfeasibleConstants`] when
/// no threshold pair exists or the horizon is not positive.
pub fn compute_constants(
    n: usize,
    m: usize,
    r0: f64,
    bounds: &LocalBounds,
    rule: EpsilonRule,
) -> Result<ConstantPipeline> {
    if n == 0 || m == 0 || !(r0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bad dimensions n={n} m={m} r0={r0}"
        )));
    }
    let (k0, k, c9) = choose_thresholds(n).ok_or(Error::InfeasibleConstants { n, m })?;
    let nf = n as f64;
    let mf = bounds.overlap as f64;
    let c5 = nf * mf * bounds.c4 / (r0 * r0);
    let c6 = 2.0 * nf * mf.sqrt() * bounds.c3 / r0;
    let epsilon = rule.epsilon(k0, k)?;
    let c7 = c5 + c6 * c6 / (4.0 * epsilon);
    let c8 = combinatorial(n);
    let t0 = r0 * r0 / (50.0 * nf);
    let t1 = ((k - k0 - epsilon) / c7).min(t0);
    let ratio_slack = k - c8 * (1.0 - k * k).sqrt() - epsilon - 5.0 * (1.0 - k);
    let t_final = t1.min(ratio_slack / (6.0 * c7));
    if !(t_final > 0.0) {
        return Err(Error::InfeasibleConstants { n, m });
    }
    Ok(ConstantPipeline {
        n,
        m,
        r0,
        overlap: bounds.overlap,
        c1: bounds.c1,
        c2: bounds.c2,
        c3: bounds.c3,
        c4: bounds.c4,
        c5,
        c6,
        c7,
        c8,
        c9,
        k0,
        k,
        epsilon,
        t0,
        t1,
        t_final,
    })
}
