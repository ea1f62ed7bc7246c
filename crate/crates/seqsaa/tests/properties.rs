//! Property tests for the estimator and sampling invariants.

use proptest::prelude::*;
use seqsaa::model::mean_and_variance;
use seqsaa::rng::{Purpose, StreamKey};
use seqsaa::sampling::{draw_antithetic, draw_iid, draw_lhs, CoordDist, ScenarioModel};

fn unit_model(d: usize) -> ScenarioModel {
    ScenarioModel {
        coords: vec![CoordDist::Uniform { lo: 0.0, hi: 1.0 }; d],
        h_base: vec![0.0; d],
        h_coeffs: (0..d).map(|i| (i, i, 1.0)).collect(),
        t_base: vec![],
        t_coeffs: vec![],
    }
}

proptest! {
    #[test]
    fn variance_nonnegative_and_uses_divisor_m(values in prop::collection::vec(-1e6f64..1e6, 1..40)) {
        let (_, var) = mean_and_variance(&values);
        prop_assert!(var >= 0.0);
        if values.len() > 1 {
            // Divisor-m variance is strictly below the m-1 version for
            // non-constant samples.
            let m = values.len() as f64;
            let mean = values.iter().sum::<f64>() / m;
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            if ss > 0.0 {
                prop_assert!(var < ss / (m - 1.0));
                prop_assert!((var - ss / m).abs() <= 1e-9 * ss.max(1.0));
            }
        }
    }

    #[test]
    fn variance_shift_invariant(values in prop::collection::vec(-1e3f64..1e3, 2..30), shift in -1e3f64..1e3) {
        let (_, var) = mean_and_variance(&values);
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let (_, var2) = mean_and_variance(&shifted);
        prop_assert!((var - var2).abs() <= 1e-6 * (1.0 + var.abs()));
    }

    #[test]
    fn antithetic_reflection_holds_for_any_even_size(seed in 0u64..5000, pairs in 1usize..40) {
        let model = unit_model(2);
        let key = StreamKey::new(seed, Purpose::Solve, 1, 0);
        let scenarios = draw_antithetic(&model, key, 2 * pairs).unwrap();
        for pair in scenarios.chunks(2) {
            for dim in 0..2 {
                prop_assert_eq!(pair[1].h[dim], 1.0 - pair[0].h[dim]);
            }
        }
    }

    #[test]
    fn lhs_occupancy_exact_for_any_size(seed in 0u64..5000, n in 1usize..60) {
        let model = unit_model(3);
        let key = StreamKey::new(seed, Purpose::Solve, 2, 0);
        let scenarios = draw_lhs(&model, key, n);
        for dim in 0..3 {
            let mut counts = vec![0usize; n];
            for sc in &scenarios {
                let stratum = ((sc.h[dim] * n as f64).floor() as usize).min(n - 1);
                counts[stratum] += 1;
            }
            prop_assert!(counts.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn iid_draws_are_prefix_consistent(seed in 0u64..5000, n in 1usize..30, extra in 1usize..30) {
        let model = unit_model(2);
        let key = StreamKey::new(seed, Purpose::Solve, 3, 0);
        let short = draw_iid(&model, key, n);
        let long = draw_iid(&model, key, n + extra);
        for (a, b) in short.iter().zip(&long) {
            prop_assert_eq!(&a.h, &b.h);
        }
    }
}
