//! Optimiser against an exhaustive grid, plus determinism, refinement and
//! monotonicity properties.

use cvqkd_core::channel_sim::fiber_transmission;
use cvqkd_core::estimators::EstimatorKind;
use cvqkd_core::optimizer::{
    maximum_distance, maximum_distance_asymptotic, optimize_estimators, optimize_key_rate,
    rate_at, RateTarget, SearchConfig,
};
use cvqkd_core::security::{SecurityOptions, KEY_RATE_ESTIMATORS};

fn target(distance_km: f64, n_total: usize, estimator: EstimatorKind) -> RateTarget {
    RateTarget {
        transmission: fiber_transmission(distance_km, 0.2).unwrap(),
        xi: 0.01,
        beta: 0.95,
        n_total,
        epsilon_pe: 1e-10,
        estimator,
    }
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[test]
fn matches_exhaustive_fine_grid() {
    let config = SearchConfig::default();
    let opts = SecurityOptions::default();
    let v_as = log_grid(config.v_a_min, config.v_a_max, 400);
    let fracs = log_grid(config.m_fraction_min, config.m_fraction_max, 400);
    for kind in KEY_RATE_ESTIMATORS {
        let t = target(20.0, 1_000_000_000, kind);
        let mut brute = f64::NEG_INFINITY;
        for &v_a in &v_as {
            for &f in &fracs {
                brute = brute.max(rate_at(&t, v_a, f, &opts).unwrap());
            }
        }
        let best = optimize_key_rate(&t, &config, &opts).unwrap();
        assert!(brute > 0.0);
        assert!(
            (best.best_key_rate - brute).abs() <= 0.01 * brute,
            "{kind}: optimiser {} vs grid {brute}",
            best.best_key_rate
        );
    }
}

#[test]
fn identical_inputs_give_identical_results() {
    let config = SearchConfig::default();
    let opts = SecurityOptions::default();
    for d in [5.0, 60.0, 110.0] {
        let t = target(d, 1_000_000_000, EstimatorKind::NoiseOpt);
        let a = optimize_key_rate(&t, &config, &opts).unwrap();
        let b = optimize_key_rate(&t, &config, &opts).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn refinement_never_loses_to_evaluated_points() {
    let config = SearchConfig::default();
    let opts = SecurityOptions::default();
    for kind in KEY_RATE_ESTIMATORS {
        for d in [0.0, 30.0, 70.0, 115.0, 117.5] {
            let r = optimize_key_rate(&target(d, 1_000_000_000, kind), &config, &opts).unwrap();
            let seen = r
                .trace
                .iter()
                .chain(std::iter::once(&r.grid_best))
                .map(|p| p.key_rate_raw.max(0.0))
                .fold(0.0, f64::max);
            assert!(r.best_key_rate >= seen, "{kind} at {d} km: {} < {seen}", r.best_key_rate);
            assert!(r.best_m_fraction > 0.0 && r.best_m_fraction < 1.0);
        }
    }
}

#[test]
fn rate_is_monotone_in_distance_and_block_size() {
    let config = SearchConfig::default();
    let opts = SecurityOptions::default();
    for kind in KEY_RATE_ESTIMATORS {
        let rates: Vec<f64> = (0..=16)
            .map(|i| {
                optimize_key_rate(&target(5.0 * i as f64, 10_000_000, kind), &config, &opts)
                    .unwrap()
                    .best_key_rate
            })
            .collect();
        for w in rates.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{kind}: {rates:?}");
        }
        let by_n: Vec<f64> = [100_000usize, 10_000_000, 1_000_000_000, 1_000_000_000_000]
            .iter()
            .map(|&n| optimize_key_rate(&target(30.0, n, kind), &config, &opts).unwrap().best_key_rate)
            .collect();
        for w in by_n.windows(2) {
            assert!(w[1] >= w[0] * (1.0 - 1e-9), "{kind}: {by_n:?}");
        }
    }
}

#[test]
fn noiseless_unit_channel_needs_little_estimation() {
    let config = SearchConfig::default();
    let opts = SecurityOptions::default();
    let t = RateTarget { transmission: 1.0, xi: 0.0, ..target(0.0, 1_000_000_000, EstimatorKind::NoiseMle) };
    let r = optimize_key_rate(&t, &config, &opts).unwrap();
    let capacity = 0.95 * 0.5 * (1.0 + r.best_v_a).log2();
    assert!(r.best_m_fraction < 0.05, "{}", r.best_m_fraction);
    assert!((r.best_key_rate - capacity).abs() <= 0.1 * capacity, "{} vs {capacity}", r.best_key_rate);
}

#[test]
fn blended_estimator_dominates_after_optimisation() {
    let config = SearchConfig::default();
    let opts = SecurityOptions::default();
    for n in [100_000usize, 1_000_000_000] {
        for d in [0.0, 20.0, 35.0, 38.7, 60.0, 110.0] {
            let base = target(d, n, EstimatorKind::NoiseOpt);
            let r = optimize_estimators(&base, &KEY_RATE_ESTIMATORS, &config, &opts).unwrap();
            assert!(r[2].best_key_rate >= r[0].best_key_rate, "N={n} d={d}");
            assert!(r[2].best_key_rate >= r[1].best_key_rate, "N={n} d={d}");
        }
    }
}

#[test]
fn maximum_distance_orders_by_estimator_and_asymptote() {
    let config = SearchConfig::default();
    let opts = SecurityOptions::default();
    let range = |n, kind| maximum_distance(0.01, 0.95, n, 1e-10, kind, 0.2, &config, &opts).unwrap();
    let mle = range(100_000, EstimatorKind::NoiseMle);
    let opt = range(100_000, EstimatorKind::NoiseOpt);
    assert!(!mle.no_key_at_origin && !mle.reached_cap);
    assert!(opt.distance_km >= mle.distance_km);
    assert!(mle.distance_km > 30.0 && mle.distance_km < 50.0, "{}", mle.distance_km);

    let asym = maximum_distance_asymptotic(0.01, 0.95, 0.2, &config).unwrap();
    let big = range(1_000_000_000_000, EstimatorKind::NoiseOpt);
    assert!(asym.distance_km >= big.distance_km);

    // Excess noise above the reverse-reconciliation threshold: no key anywhere.
    let none = maximum_distance(0.5, 0.95, 100_000, 1e-10, EstimatorKind::NoiseMle, 0.2, &config, &opts).unwrap();
    assert!(none.no_key_at_origin && none.distance_km == 0.0);
}
