//! Experiment drivers: configuration handling, table schemas, reference
//! values and reproducibility.

use cvqkd_core::channel_sim::fiber_transmission;
use cvqkd_core::experiments::{
    monte_carlo_validate, read_csv_records, run_fig1, run_fig2, run_fig3, std_crossover_km,
    write_artifacts, ExperimentConfig, FIG1_COLUMNS, FIG3_COLUMNS,
};

fn small_config() -> ExperimentConfig {
    ExperimentConfig::parse(
        "N = 4000\n\
         m = 2000\n\
         trials = 120\n\
         mc_distances = 0, 50\n\
         distances = 0:100:10\n\
         keyrate_distances = 0:40:20\n\
         N_values = 1e5, 1e7\n\
         fig3_N = 1e7\n\
         seed = 42\n",
    )
    .unwrap()
}

#[test]
fn configuration_round_trips_through_text() {
    for config in [ExperimentConfig::default(), small_config()] {
        let again = ExperimentConfig::parse(&config.to_text()).unwrap();
        assert_eq!(again, config);
    }
}

#[test]
fn configuration_rejects_unknown_duplicate_and_invalid_keys() {
    assert!(ExperimentConfig::parse("bogus = 1").is_err());
    assert!(ExperimentConfig::parse("xi = 0.1\nxi = 0.2").is_err());
    assert!(ExperimentConfig::parse("m = 10\nN = 5").is_err());
    assert!(ExperimentConfig::parse("convention = sideways").is_err());
    assert!(ExperimentConfig::parse("N = 1.5e3.2").is_err());
    let c = ExperimentConfig::parse("  # only a comment\nN = 1e6 # trailing\n").unwrap();
    assert_eq!(c.n_total, 1_000_000);
}

/// Distance where `Var_MM = Var_MLE`, solved by bisection on the closed forms.
fn analytic_crossover_km(config: &ExperimentConfig) -> f64 {
    let (m, n) = (config.m as f64, config.n_total as f64);
    let gap = |d: f64| {
        let t2 = fiber_transmission(d, config.loss_db_per_km).unwrap();
        let s = 1.0 + t2 * config.xi;
        let var_mm = 2.0 * s * s / n + (1.0 / m - 1.0 / n) * 4.0 * t2 * s * config.v_a;
        let var_mle = 2.0 * s * s * (m - 1.0) / (m * m);
        var_mm - var_mle
    };
    let (mut lo, mut hi) = (0.0, 200.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[test]
fn standard_deviation_table_matches_reference_values() {
    let config = ExperimentConfig::default();
    let fig = run_fig1(&config, false).unwrap();
    assert!(fig.passed());
    let origin = &fig.rows[0];
    assert_eq!(origin.distance_km, 0.0);
    assert!((origin.std_mle - 6.388e-3).abs() < 1e-6);
    assert!((origin.std_mm - 1.190e-2).abs() < 1e-5);
    assert!((origin.std_vxi.unwrap() - 3.44e-2).abs() < 1e-4);

    let crossover = std_crossover_km(&fig.rows).unwrap();
    let exact = analytic_crossover_km(&config);
    assert!((crossover - exact).abs() < 0.2, "{crossover} vs {exact}");
    assert!((exact - 39.0).abs() < 1.0, "{exact}");

    let art = &fig.artifacts(&config)[0];
    let (header, rows) = read_csv_records(&art.contents).unwrap();
    assert_eq!(header, FIG1_COLUMNS);
    assert_eq!(rows.len(), 101);
}

#[test]
fn key_rate_tables_have_stable_schemas() {
    let config = small_config();
    let fig2 = run_fig2(&config).unwrap();
    let arts = fig2.artifacts(&config);
    let main = arts.iter().find(|a| a.name == "fig2.csv").unwrap();
    let (header, rows) = read_csv_records(&main.contents).unwrap();
    assert_eq!(
        header,
        ["distance_km", "N", "estimator", "key_rate", "key_rate_raw", "opt_V_A", "opt_m_over_N"]
    );
    // Three distances, two block sizes, three estimators, plus the asymptote.
    assert_eq!(rows.len(), 3 * 2 * 3 + 3);
    assert!(arts.iter().any(|a| a.name == "fig2_ranges.csv"));
    assert!(arts.iter().any(|a| a.name == "fig2_traces.csv"));

    let fig3 = run_fig3(&config).unwrap();
    let art = fig3.artifacts(&config).into_iter().find(|a| a.name == "fig3.csv").unwrap();
    let (header, rows) = read_csv_records(&art.contents).unwrap();
    assert_eq!(header, FIG3_COLUMNS);
    assert_eq!(rows.len(), 3 * 3);
    for r in &rows {
        let f: f64 = r[2].parse().unwrap();
        assert!(f > 0.0 && f < 1.0);
    }
}

#[test]
fn validation_reruns_are_byte_identical() {
    let config = small_config();
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let report = monte_carlo_validate(&config).unwrap();
        let paths = write_artifacts(dir.path(), &report.artifacts(&config)).unwrap();
        paths.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    let first = run();
    assert_eq!(first, run());
    assert_eq!(first.len(), 3);

    let mut other = config.clone();
    other.seed = 43;
    let report = monte_carlo_validate(&other).unwrap();
    let changed: Vec<Vec<u8>> = report.artifacts(&other).into_iter().map(|a| a.contents.into_bytes()).collect();
    assert_ne!(first[0], changed[0]);
}

#[test]
fn validation_needs_enough_trials() {
    let mut config = small_config();
    config.trials = 99;
    assert!(monte_carlo_validate(&config).is_err());
}
