use graphflow_core::geometry::{sample_all, singular_values};
use graphflow_core::initdata::{corner_graph, mollify, random_fourier};
use graphflow_core::{ConstantNForm, Surface};
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn graph_star_omega_matches_singular_value_product(
        n in 1usize..=2,
        m in 1usize..=2,
        amplitude in 0.0f64..0.6,
        seed in 0u64..1000,
    ) {
        let graph = random_fourier(n, m, 12, 2, amplitude, seed).unwrap();
        let form = ConstantNForm::base(n, n + m);
        for sample in sample_all(&graph).unwrap() {
            let df = DMatrix::from_fn(m, n, |alpha, i| sample.jet.first[i][n + alpha]);
            let expected: f64 = singular_values(&df)
                .iter()
                .map(|l| (1.0 + l * l).sqrt().recip())
                .product();
            let star = sample.star_omega(&form);
            prop_assert!(star > 0.0 && star <= 1.0 + 1e-12);
            prop_assert!((star - expected).abs() < 1e-12, "{star} vs {expected}");
        }
    }

    #[test]
    fn mollified_corners_stay_within_range_and_keep_their_mean(
        m in 1usize..=2,
        slope in 0.05f64..1.0,
        sigma_cells in 0.5f64..4.0,
        seed in 0u64..1000,
    ) {
        let raw = corner_graph(1, m, slope, 64, seed).unwrap();
        let h = raw.lattice().min_spacing();
        let smooth = mollify(&raw, sigma_cells * h).unwrap();
        for (before, after) in raw.values.iter().zip(&smooth.values) {
            let lo = before.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = before.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(after.iter().all(|v| *v >= lo - 1e-12 && *v <= hi + 1e-12));
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            prop_assert!((mean(before) - mean(after)).abs() < 1e-10);
        }
    }
}

#[test]
fn flat_graph_is_totally_geodesic() {
    let flat = random_fourier(2, 2, 8, 2, 0.0, 3).unwrap();
    let form = ConstantNForm::base(2, 4);
    for sample in sample_all(&flat).unwrap() {
        assert_eq!(sample.a_norm2(), 0.0);
        assert_eq!(sample.star_omega(&form), 1.0);
    }
}
