//! Property tests for the SVD, power iteration and rank removal.

use nalgebra::DMatrix;
use proptest::prelude::*;

use rankfeat::spectral::{
    dominant_triplet, power_iteration, remove_rank_n, singular_values, thin_svd, PowerIterationConfig, Solver,
};
use rankfeat::synth::{gen_feature, BaseSpectrum, SpectrumSpec};
use rankfeat::FeatureMap;

fn feature_map() -> impl Strategy<Value = FeatureMap> {
    (1usize..=12, 1usize..=12).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |v| FeatureMap::from_channel_major(r, c, &v).unwrap())
    })
}

fn nonzero_feature_map() -> impl Strategy<Value = FeatureMap> {
    feature_map().prop_filter("nonzero", |x| x.frobenius_norm() > 1e-6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn singular_vectors_are_orthonormal(x in feature_map()) {
        let svd = thin_svd(&x);
        let k = svd.values.len();
        let ul = svd.left.tr_mul(&svd.left);
        let vr = svd.right.tr_mul(&svd.right);
        prop_assert!((ul - DMatrix::identity(k, k)).amax() < 1e-10);
        prop_assert!((vr - DMatrix::identity(k, k)).amax() < 1e-10);
        prop_assert!(svd.values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(svd.values.iter().all(|s| *s >= 0.0));
    }

    #[test]
    fn full_reconstruction(x in feature_map()) {
        let svd = thin_svd(&x);
        let rebuilt = svd.leading_sum(svd.values.len());
        let scale = x.frobenius_norm().max(1.0);
        prop_assert!((x.matrix() - rebuilt).amax() <= 1e-10 * scale);
    }

    #[test]
    fn eckart_young_frobenius_identity(x in nonzero_feature_map()) {
        let spectrum = singular_values(&x);
        let residual = remove_rank_n(&x, 1, &Solver::Exact).unwrap();
        let got = residual.frobenius_norm().powi(2);
        let want: f64 = spectrum.values()[1..].iter().map(|s| s * s).sum();
        let scale = x.frobenius_norm().powi(2);
        prop_assert!((got - want).abs() <= 1e-8 * scale, "{got} vs {want}");
    }

    #[test]
    fn rank_removal_drops_leading_values(x in nonzero_feature_map(), n in 1usize..4) {
        let n = n.min(x.rank_bound());
        let before = singular_values(&x);
        let after = singular_values(&remove_rank_n(&x, n, &Solver::Exact).unwrap());
        // Squared values carry an absolute error of order eps·s₁².
        let tol = 1e-12 * before.largest().unwrap().powi(2);
        for (i, s) in after.values().iter().enumerate() {
            let expected = before.values().get(i + n).copied().unwrap_or(0.0);
            prop_assert!((s * s - expected * expected).abs() <= tol, "index {i}: {s} vs {expected}");
        }
    }

    #[test]
    fn power_iteration_is_deterministic_in_seed(x in nonzero_feature_map(), seed in any::<u64>()) {
        let cfg = PowerIterationConfig { max_iters: 7, tol: 0.0, seed };
        let a = power_iteration(&x, &cfg).unwrap();
        let b = power_iteration(&x, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn power_iteration_never_overshoots(x in nonzero_feature_map(), seed in any::<u64>()) {
        let s1 = singular_values(&x).largest().unwrap();
        let cfg = PowerIterationConfig { max_iters: 5, tol: 0.0, seed };
        let t = power_iteration(&x, &cfg).unwrap();
        prop_assert!(t.s <= s1 * (1.0 + 1e-12));
        prop_assert!((t.u.norm() - 1.0).abs() < 1e-12);
        prop_assert!((t.v.norm() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn power_iteration_converges_with_spectral_gap(
        seed in any::<u64>(),
        c in 4usize..24,
        hw in 4usize..24,
        spike in 1.5f64..4.0,
    ) {
        let n = c.min(hw);
        let spec = SpectrumSpec {
            base: BaseSpectrum::Power { len: n, alpha: 0.5, scale: 2.0 },
            spike,
            noise_sigma: 0.0,
            nonneg: false,
        };
        let x = gen_feature(&spec, c, hw, seed).unwrap();
        let exact = dominant_triplet(&x, &Solver::Exact).unwrap();
        let pi = dominant_triplet(
            &x,
            &Solver::PowerIteration(PowerIterationConfig { max_iters: 200, tol: 0.0, seed }),
        )
        .unwrap();
        prop_assert!((pi.s - exact.s).abs() <= 1e-10 * exact.s);
        prop_assert!((pi.outer() - exact.outer()).amax() <= 1e-8 * exact.s);
    }
}
