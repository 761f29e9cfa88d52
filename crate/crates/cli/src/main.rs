//! `cvqkd`: figure tables, Monte Carlo validation and key-rate tools.
//!
//! Exit status: 0 when every check passes, 1 when a tolerance check fails,
//! 2 on usage, configuration or runtime errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cvqkd_core::channel_sim::{
    derive_seed, sample_session, save_session_csv, split_session, ChannelParams, ProtocolParams,
};
use cvqkd_core::estimators::{estimate_suite, EstimatorKind, VarianceEval};
use cvqkd_core::experiments::{
    monte_carlo_validate, num, run_fig1, run_fig2, run_fig3, true_value, write_artifacts,
    Artifact, CsvTable, ExperimentConfig, PropertyCheck,
};
use cvqkd_core::optimizer::{optimize_asymptotic, optimize_estimators, RateTarget};
use cvqkd_core::security::{key_rate_asymptotic, key_rate_finite, FiniteKeyInputs};
use cvqkd_core::{channel_sim::fiber_transmission, Error};

const EXIT_TOLERANCE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "cvqkd", version, about = "Finite-size CV-QKD noise estimation and key rates")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Plain-text `key = value` configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Monte Carlo trials per distance
    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Quantile convention for the worst-case bounds (erf|gaussian)
    #[arg(long, global = true)]
    convention: Option<String>,

    /// Override any configuration key, e.g. `--set N=1e7`
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimator standard deviations versus distance
    Fig1 {
        /// Skip the Monte Carlo markers
        #[arg(long)]
        no_mc: bool,
    },
    /// Optimised finite-size key rates versus distance
    Fig2,
    /// Optimal revealed fraction and modulation variance versus distance
    Fig3,
    /// Monte Carlo check of every theoretical variance
    Validate,
    /// Sample one session and run every estimator on it
    Simulate {
        #[arg(long, default_value_t = 0.0)]
        distance: f64,
    },
    /// Finite-size key rate at the configured V_A and m
    Keyrate {
        /// Distances in km; defaults to the configured key-rate grid
        #[arg(long, value_delimiter = ',')]
        distance: Vec<f64>,
        /// Estimators; defaults to the configured list
        #[arg(long, value_delimiter = ',')]
        estimator: Vec<String>,
    },
    /// Optimise V_A and m/N at given distances
    Optimize {
        #[arg(long, value_delimiter = ',', required = true)]
        distance: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        estimator: Vec<String>,
    },
}

enum Outcome {
    Pass,
    ToleranceFailure,
}

fn resolve_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for o in &common.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`--set {o}` is not KEY=VALUE")))?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(trials) = common.trials {
        config.trials = trials;
    }
    if let Some(c) = &common.convention {
        config.set("convention", c)?;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn estimator_list(names: &[String], config: &ExperimentConfig) -> Result<Vec<EstimatorKind>, Error> {
    if names.is_empty() {
        return Ok(config.estimators.clone());
    }
    names.iter().map(|n| n.parse()).collect()
}

fn write(dir: &Path, artifacts: &[Artifact]) -> Result<(), Error> {
    for path in write_artifacts(dir, artifacts)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn report_checks(checks: &[PropertyCheck]) -> Outcome {
    let mut pass = true;
    for c in checks {
        let status = match (c.gating, c.pass) {
            (true, true) => "PASS",
            (true, false) => "FAIL",
            (false, _) => "INFO",
        };
        println!("{status} {}: {}", c.name, c.detail);
        pass &= !c.gating || c.pass;
    }
    if pass {
        Outcome::Pass
    } else {
        Outcome::ToleranceFailure
    }
}

fn simulate(config: &ExperimentConfig, distance: f64) -> Result<Outcome, Error> {
    let channel = ChannelParams::from_distance(distance, config.loss_db_per_km, config.xi)?;
    let protocol = ProtocolParams::new(
        config.v_a,
        config.n_total,
        config.m,
        config.beta,
        config.epsilon_pe,
        0.0,
    )?;
    let session = sample_session(&protocol, &channel, derive_seed(config.seed, &[0]))?;
    let split = split_session(&session, config.m, derive_seed(config.seed, &[1]))?;
    let second = (config.v_m2 > 0.0)
        .then(|| {
            let p = ProtocolParams { second_modulation_variance: config.v_m2, ..protocol };
            sample_session(&p, &channel, derive_seed(config.seed, &[2]))
        })
        .transpose()?;
    let suite = estimate_suite(
        &session,
        &split,
        config.v_a,
        second.as_ref().map(|s| (s, config.v_m2)),
        VarianceEval::PlugIn,
        &config.variance_options(),
    )?;

    let mut t = CsvTable::new(&["estimator", "value", "std", "truth"]);
    for kind in EstimatorKind::ALL {
        if let Some(e) = suite.get(kind) {
            let truth = true_value(kind, &channel);
            println!("{:>12} {:>14.6e} +/- {:.3e}  (truth {truth:.6e})", kind.as_str(), e.value, e.std());
            t.row([kind.to_string(), num(e.value), num(e.std()), num(truth)]);
        }
    }
    let dir = &config.output_dir;
    write(dir, &[t.into_artifact("estimates.csv", "simulate", config)])?;
    let path = dir.join("session.csv");
    save_session_csv(&session, &path)?;
    println!("wrote {}", path.display());
    Ok(Outcome::Pass)
}

fn keyrate(config: &ExperimentConfig, distances: &[f64], kinds: &[EstimatorKind]) -> Result<Outcome, Error> {
    let distances = if distances.is_empty() { config.keyrate_distances.values() } else { distances.to_vec() };
    let asym_beta = if config.asymptotic_includes_beta { config.beta } else { 1.0 };
    let mut t = CsvTable::new(&[
        "distance_km",
        "estimator",
        "V_A",
        "m",
        "N",
        "mutual_information",
        "holevo",
        "key_rate",
        "key_rate_raw",
        "key_rate_asymptotic",
    ]);
    for &d in &distances {
        let transmission = fiber_transmission(d, config.loss_db_per_km)?;
        let asym = key_rate_asymptotic(config.v_a, transmission, config.xi, asym_beta)?;
        for &kind in kinds {
            let r = key_rate_finite(
                &FiniteKeyInputs {
                    v_a: config.v_a,
                    transmission,
                    xi: config.xi,
                    beta: config.beta,
                    n_total: config.n_total,
                    m: config.m,
                    epsilon_pe: config.epsilon_pe,
                    estimator: kind,
                },
                &config.security_options(),
            )?;
            println!("{d:>8} km {:>10}  K = {:.6e}  (asymptotic {:.6e})", kind.as_str(), r.key_rate, asym.clamped);
            t.row([
                num(d),
                kind.to_string(),
                num(config.v_a),
                config.m.to_string(),
                config.n_total.to_string(),
                num(r.mutual_information),
                num(r.holevo),
                num(r.key_rate),
                num(r.key_rate_raw),
                num(asym.clamped),
            ]);
        }
    }
    write(&config.output_dir, &[t.into_artifact("keyrate.csv", "keyrate", config)])?;
    Ok(Outcome::Pass)
}

fn optimize(config: &ExperimentConfig, distances: &[f64], kinds: &[EstimatorKind]) -> Result<Outcome, Error> {
    let asym_beta = if config.asymptotic_includes_beta { config.beta } else { 1.0 };
    let mut t = CsvTable::new(&[
        "distance_km",
        "N",
        "estimator",
        "opt_V_A",
        "opt_m_over_N",
        "m",
        "key_rate",
        "key_rate_raw",
        "evaluations",
    ]);
    for &d in distances {
        let transmission = fiber_transmission(d, config.loss_db_per_km)?;
        let base = RateTarget {
            transmission,
            xi: config.xi,
            beta: config.beta,
            n_total: config.n_total,
            epsilon_pe: config.epsilon_pe,
            estimator: kinds[0],
        };
        let results = optimize_estimators(&base, kinds, &config.search, &config.security_options())?;
        for (kind, r) in kinds.iter().zip(&results) {
            println!(
                "{d:>8} km {:>10}  K = {:.6e}  V_A = {:.4}  m/N = {:.4}",
                kind.as_str(),
                r.best_key_rate, r.best_v_a, r.best_m_fraction
            );
            t.row([
                num(d),
                config.n_total.to_string(),
                kind.to_string(),
                num(r.best_v_a),
                num(r.best_m_fraction),
                r.best_m.to_string(),
                num(r.best_key_rate),
                num(r.best_key_rate_raw),
                r.evaluations.to_string(),
            ]);
        }
        let asym = optimize_asymptotic(transmission, config.xi, asym_beta, &config.search)?;
        println!("{d:>8} km {:>10}  K = {:.6e}  V_A = {:.4}", "asymptotic", asym.key_rate, asym.best_v_a);
    }
    write(&config.output_dir, &[t.into_artifact("optimize.csv", "optimize", config)])?;
    Ok(Outcome::Pass)
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let config = resolve_config(&cli.common)?;
    let dir = config.output_dir.clone();
    match &cli.command {
        Command::Fig1 { no_mc } => {
            let fig = run_fig1(&config, !no_mc)?;
            write(&dir, &fig.artifacts(&config))?;
            Ok(report_checks(&fig.checks))
        }
        Command::Fig2 => {
            let fig = run_fig2(&config)?;
            write(&dir, &fig.artifacts(&config))?;
            Ok(report_checks(&fig.checks))
        }
        Command::Fig3 => {
            let fig = run_fig3(&config)?;
            write(&dir, &fig.artifacts(&config))?;
            Ok(report_checks(&fig.checks))
        }
        Command::Validate => {
            let report = monte_carlo_validate(&config)?;
            write(&dir, &report.artifacts(&config))?;
            for e in report.estimators.iter().filter(|e| !e.pass) {
                println!(
                    "FAIL {} at {} km: std rel error {:.4}, bias z {:.2}",
                    e.kind,
                    e.distance_km,
                    e.std_rel_error(),
                    e.bias_z()
                );
            }
            for c in report.checks.iter().filter(|c| !c.pass) {
                println!("FAIL {} at {} km: {:e} > {:e}", c.name, c.distance_km, c.value, c.tolerance);
            }
            let pass = report.passed();
            println!("validate: {}", if pass { "PASS" } else { "FAIL" });
            Ok(if pass { Outcome::Pass } else { Outcome::ToleranceFailure })
        }
        Command::Simulate { distance } => simulate(&config, *distance),
        Command::Keyrate { distance, estimator } => {
            keyrate(&config, distance, &estimator_list(estimator, &config)?)
        }
        Command::Optimize { distance, estimator } => {
            optimize(&config, distance, &estimator_list(estimator, &config)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::ToleranceFailure) => ExitCode::from(EXIT_TOLERANCE),
        Err(e) => {
            eprintln!("cvqkd: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
