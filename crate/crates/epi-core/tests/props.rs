//! Property-based invariants for the simulator, weighting and resampling.

use epi_core::bridge::truncated_poisson_logpmf;
use epi_core::model::{
    forward_simulate, CompartmentState, ContactMode, ModelKind, ModelSpec, RateState,
    ReportingMode, StaticParams,
};
use epi_core::resample::{ess, normalize_log_weights, systematic_resample};
use epi_core::rng::{stream, StreamRole};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Population is conserved and compartments stay non-negative for any
    /// parameter draw and seed.
    #[test]
    fn simulation_conserves_population(
        seed in 0u64..1_000,
        beta in 1e-5f64..1e-2,
        gamma in 0.05f64..2.0,
        i0 in 1u64..20,
    ) {
        let spec = ModelSpec {
            kind: ModelKind::Sir,
            pop_size: 200,
            contact_mode: ContactMode::Constant,
            reporting_mode: ReportingMode::Constant,
        };
        let params = StaticParams { beta: Some(beta), gamma, ..Default::default() };
        let init = CompartmentState::new([200 - i0, i0, 0], 0.0);
        let rates = RateState { log_beta: 0.0, logit_rho: None };
        let mut rng = stream(seed, 0, 0, StreamRole::Scratch);
        let traj = forward_simulate(&spec, &params, init, rates, 0.1, 50, &mut rng).unwrap();
        for p in &traj {
            prop_assert!(p.state.total() <= 200);
        }
    }

    /// Normalised weights sum to one, the log-mean-weight is shift-equivariant
    /// and the ESS lies in [1, n].
    #[test]
    fn weight_normalisation_invariants(
        raw in prop::collection::vec(-30.0f64..30.0, 2..100),
        shift in -50.0f64..50.0,
    ) {
        let mut a = raw.clone();
        let la = normalize_log_weights(&mut a).unwrap();
        let sum: f64 = a.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        let e = ess(&a);
        prop_assert!(e >= 1.0 - 1e-9 && e <= a.len() as f64 + 1e-9);

        let mut b: Vec<f64> = raw.iter().map(|w| w + shift).collect();
        let lb = normalize_log_weights(&mut b).unwrap();
        prop_assert!((lb - (la + shift)).abs() < 1e-9);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    /// Systematic resampling returns n indices and each particle's copy count
    /// is within one of its expected count.
    #[test]
    fn systematic_counts_within_one_of_expectation(
        raw in prop::collection::vec(0.01f64..1.0, 2..50),
        seed in 0u64..500,
    ) {
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mut rng = stream(seed, 0, 0, StreamRole::Resample);
        let idx = systematic_resample(&weights, &mut rng).unwrap();
        prop_assert_eq!(idx.len(), weights.len());
        let n = weights.len() as f64;
        for (k, w) in weights.iter().enumerate() {
            let copies = idx.iter().filter(|&&i| i == k).count() as f64;
            prop_assert!((copies - n * w).abs() < 1.0 + 1e-9);
        }
    }

    /// The cap-lumped truncated Poisson pmf sums to one over its support.
    #[test]
    fn truncated_poisson_sums_to_one(mean in 0.0f64..20.0, cap in 0u64..40) {
        let total: f64 = (0..=cap).map(|k| truncated_poisson_logpmf(k, mean, cap).exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "total = {}", total);
    }
}
