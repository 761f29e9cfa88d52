//! Monte Carlo validation of every theoretical variance.
//!
//! Each trial draws two independent sessions from seeds derived from the
//! master seed and the path `[distance index, trial, stream]`: stream 0 is a
//! plain session for the moment-based estimators, stream 1 picks its
//! revealed subset and stream 2 is a session with the second modulation on.

use std::fmt::Write as _;

use crate::channel_sim::{
    derive_seed, sample_session, split_session, ChannelParams, ProtocolParams,
};
use crate::error::{domain, Result};
use crate::estimators::{
    cross_moment, estimate_sigma2_mle, estimate_suite, second_moment, sigma2_mm_key_residual,
    theoretical_variance, DesignPoint, EstimatorKind, VarianceEval,
};
use crate::par;
use crate::stats::{correlation, SampleSummary};

use super::config::{ExperimentConfig, WeightEval};
use super::output::{metadata_header, num, Artifact, CsvTable};

pub const MIN_TRIALS: usize = 100;
pub const STD_TOLERANCE: f64 = 0.05;
pub const BIAS_SE_TOLERANCE: f64 = 3.0;
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
pub const SPLIT_TOLERANCE: f64 = 1e-12;
/// Bound on the sample correlation between the revealed-state MLE and the
/// key-subset moment estimator, which are independent.
pub const CORRELATION_TOLERANCE: f64 = 0.05;
/// Slack on empirical dominance of the blended estimators.
pub const DOMINANCE_SLACK: f64 = 0.05;

/// Estimates and identity residuals from one trial, indexed like
/// [`EstimatorKind::ALL`]. Missing estimators are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub values: Vec<f64>,
    /// Relative gap between the full-set moment estimator and the full-set
    /// residual MLE.
    pub identity_residual: f64,
    /// Relative gap in `N s_full = m s_m + n s_n` under a common slope.
    pub split_residual: f64,
}

impl TrialOutcome {
    pub fn value(&self, kind: EstimatorKind) -> f64 {
        self.values[kind_index(kind)]
    }
}

fn kind_index(kind: EstimatorKind) -> usize {
    EstimatorKind::ALL.iter().position(|k| *k == kind).expect("kind is listed in ALL")
}

/// What each estimator targets at the given channel.
pub fn true_value(kind: EstimatorKind, channel: &ChannelParams) -> f64 {
    use EstimatorKind::*;
    match kind {
        TransmissionMle => channel.amplitude(),
        TransmissionSecondMod => channel.transmission(),
        NoiseMle | NoiseMmKnownVa | NoiseMm | NoiseMmKey | NoiseOpt => channel.sigma2(),
        ExcessNoiseSecondMod | ExcessNoiseOpt => channel.output_excess_noise(),
    }
}

pub fn design_point(config: &ExperimentConfig, distance_km: f64) -> Result<DesignPoint> {
    DesignPoint::at_distance(
        distance_km,
        config.loss_db_per_km,
        config.v_a,
        config.xi,
        config.m,
        config.n_total,
        config.v_m2,
    )
}

fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Runs `config.trials` trials at one distance.
pub fn simulate_trials(
    config: &ExperimentConfig,
    distance_index: usize,
    distance_km: f64,
) -> Result<Vec<TrialOutcome>> {
    let channel = ChannelParams::from_distance(distance_km, config.loss_db_per_km, config.xi)?;
    let plain = ProtocolParams::new(
        config.v_a,
        config.n_total,
        config.m,
        config.beta,
        config.epsilon_pe,
        0.0,
    )?;
    let with_m2 = ProtocolParams { second_modulation_variance: config.v_m2, ..plain };
    let eval = match config.weight_eval {
        WeightEval::PlugIn => VarianceEval::PlugIn,
        WeightEval::Truth => VarianceEval::AtTruth(channel),
    };
    let options = config.variance_options();
    let di = distance_index as u64;

    par::map_indexed(config.trials, |trial| -> Result<TrialOutcome> {
        let path = |stream: u64| derive_seed(config.seed, &[di, trial as u64, stream]);
        let session = sample_session(&plain, &channel, path(0))?;
        let split = split_session(&session, config.m, path(1))?;
        let second = if config.v_m2 > 0.0 {
            Some(sample_session(&with_m2, &channel, path(2))?)
        } else {
            None
        };
        let suite = estimate_suite(
            &session,
            &split,
            config.v_a,
            second.as_ref().map(|s| (s, config.v_m2)),
            eval,
            &options,
        )?;
        let values = EstimatorKind::ALL
            .iter()
            .map(|&k| suite.get(k).map_or(f64::NAN, |e| e.value))
            .collect();

        let t_full = cross_moment(&session.x, &session.y)? / second_moment(&session.x)?;
        let mle_full = estimate_sigma2_mle(&session.x, &session.y, t_full)?.value;
        let mm_full = second_moment(&session.y)? - t_full * t_full * second_moment(&session.x)?;
        let (x_pe, y_pe) = session.subset(&split.pe_indices);
        let (x_key, y_key) = session.subset(&split.key_indices);
        let n_total = session.len() as f64;
        let parts = split.revealed() as f64 * estimate_sigma2_mle(&x_pe, &y_pe, t_full)?.value
            + split.key() as f64 * sigma2_mm_key_residual(&x_key, &y_key, t_full)?;

        Ok(TrialOutcome {
            values,
            identity_residual: relative_gap(mm_full, mle_full),
            split_residual: relative_gap(n_total * mle_full, parts),
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub distance_km: f64,
    pub kind: EstimatorKind,
    pub truth: f64,
    pub theory_std: f64,
    pub empirical_std: f64,
    pub mean: f64,
    pub bias: f64,
    pub bias_se: f64,
    pub pass: bool,
}

impl EstimatorReport {
    pub fn std_rel_error(&self) -> f64 {
        self.empirical_std / self.theory_std - 1.0
    }

    pub fn bias_z(&self) -> f64 {
        self.bias / self.bias_se
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub distance_km: f64,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub trials: usize,
    pub estimators: Vec<EstimatorReport>,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.estimators.iter().all(|e| e.pass) && self.checks.iter().all(|c| c.pass)
    }

    pub fn estimator(&self, distance_km: f64, kind: EstimatorKind) -> Option<&EstimatorReport> {
        self.estimators.iter().find(|e| e.distance_km == distance_km && e.kind == kind)
    }

    pub fn artifacts(&self, config: &ExperimentConfig) -> Vec<Artifact> {
        let mut est = CsvTable::new(&[
            "distance_km",
            "estimator",
            "truth",
            "theory_std",
            "empirical_std",
            "std_rel_error",
            "mean",
            "bias",
            "bias_se",
            "bias_z",
            "pass",
        ]);
        for e in &self.estimators {
            est.row([
                num(e.distance_km),
                e.kind.to_string(),
                num(e.truth),
                num(e.theory_std),
                num(e.empirical_std),
                num(e.std_rel_error()),
                num(e.mean),
                num(e.bias),
                num(e.bias_se),
                num(e.bias_z()),
                e.pass.to_string(),
            ]);
        }
        let mut checks = CsvTable::new(&["distance_km", "check", "value", "tolerance", "pass"]);
        for c in &self.checks {
            checks.row([
                num(c.distance_km),
                c.name.clone(),
                num(c.value),
                num(c.tolerance),
                c.pass.to_string(),
            ]);
        }

        let mut summary = metadata_header("validate", config);
        let _ = writeln!(summary, "trials per distance: {}", self.trials);
        for e in self.estimators.iter().filter(|e| !e.pass) {
            let _ = writeln!(
                summary,
                "FAIL {} at {} km: std rel error {:.4}, bias z {:.2}",
                e.kind,
                e.distance_km,
                e.std_rel_error(),
                e.bias_z()
            );
        }
        for c in self.checks.iter().filter(|c| !c.pass) {
            let _ = writeln!(
                summary,
                "FAIL {} at {} km: {} > {}",
                c.name, c.distance_km, c.value, c.tolerance
            );
        }
        let worst_std = self
            .estimators
            .iter()
            .map(|e| e.std_rel_error().abs())
            .fold(0.0, f64::max);
        let worst_z = self.estimators.iter().map(|e| e.bias_z().abs()).fold(0.0, f64::max);
        let _ = writeln!(summary, "largest |std rel error|: {worst_std:.4}");
        let _ = writeln!(summary, "largest |bias z|: {worst_z:.3}");
        let _ = writeln!(summary, "overall: {}", if self.passed() { "PASS" } else { "FAIL" });

        vec![
            est.into_artifact("validate_estimators.csv", "validate", config),
            checks.into_artifact("validate_checks.csv", "validate", config),
            Artifact { name: "validate_summary.txt".into(), contents: summary },
        ]
    }
}

/// Compares every estimator with its theory at each Monte Carlo distance
/// and runs the identity, correlation and dominance checks.
pub fn monte_carlo_validate(config: &ExperimentConfig) -> Result<ValidationReport> {
    config.validate()?;
    if config.trials < MIN_TRIALS {
        return Err(domain!("validation needs at least {MIN_TRIALS} trials, got {}", config.trials));
    }
    let options = config.variance_options();
    let mut estimators = Vec::new();
    let mut checks = Vec::new();
    let trials = config.trials;

    for (di, &d) in config.mc_distances.values().iter().enumerate() {
        let outcomes = simulate_trials(config, di, d)?;
        let channel = ChannelParams::from_distance(d, config.loss_db_per_km, config.xi)?;
        let point = design_point(config, d)?;
        let column = |kind: EstimatorKind| -> Vec<f64> {
            outcomes.iter().map(|o| o.value(kind)).collect()
        };
        let mut check = |name: &str, value: f64, tolerance: f64| {
            checks.push(CheckResult {
                distance_km: d,
                name: name.to_owned(),
                value,
                tolerance,
                pass: value <= tolerance,
            });
        };

        let mut empirical_std = |kind| -> Result<Option<(f64, f64)>> {
            let col = column(kind);
            if col.iter().any(|v| v.is_nan()) {
                return Ok(None);
            }
            let summary = SampleSummary::from_slice(&col);
            let theory = theoretical_variance(kind, &point, &options)?.sqrt();
            let truth = true_value(kind, &channel);
            let bias = summary.mean - truth;
            let se = summary.standard_error();
            let report = EstimatorReport {
                distance_km: d,
                kind,
                truth,
                theory_std: theory,
                empirical_std: summary.std,
                mean: summary.mean,
                bias,
                bias_se: se,
                pass: (summary.std / theory - 1.0).abs() <= STD_TOLERANCE
                    && bias.abs() <= BIAS_SE_TOLERANCE * se,
            };
            estimators.push(report);
            Ok(Some((summary.std, theory)))
        };
        let mut stds = Vec::new();
        for kind in EstimatorKind::ALL {
            stds.push((kind, empirical_std(kind)?));
        }
        let std_of = |kind| stds.iter().find(|(k, _)| *k == kind).and_then(|(_, s)| *s);

        let identity = outcomes.iter().map(|o| o.identity_residual).fold(0.0, f64::max);
        check("identity_residual", identity, IDENTITY_TOLERANCE);
        let split = outcomes.iter().map(|o| o.split_residual).fold(0.0, f64::max);
        check("split_residual", split, SPLIT_TOLERANCE);

        let corr = correlation(&column(EstimatorKind::NoiseMle), &column(EstimatorKind::NoiseMmKey));
        check(
            "abs_corr_mle_mmpp",
            corr.abs(),
            CORRELATION_TOLERANCE,
        );

        let blends = [
            (EstimatorKind::NoiseOpt, EstimatorKind::NoiseMle, EstimatorKind::NoiseMmKey),
            (EstimatorKind::ExcessNoiseOpt, EstimatorKind::ExcessNoiseSecondMod, EstimatorKind::NoiseMle),
        ];
        for (blend, a, b) in blends {
            let (Some((e_opt, t_opt)), Some((e_a, t_a)), Some((e_b, t_b))) =
                (std_of(blend), std_of(a), std_of(b))
            else {
                continue;
            };
            // Ratios above one mean the blend is worse than its best input.
            check(
                &format!("theory_dominance_{blend}"),
                t_opt / t_a.min(t_b),
                1.0 + 1e-12,
            );
            check(
                &format!("empirical_dominance_{blend}"),
                e_opt / e_a.min(e_b),
                1.0 + DOMINANCE_SLACK,
            );
        }
    }
    Ok(ValidationReport { trials, estimators, checks })
}
