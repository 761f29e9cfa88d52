//! Plain-text `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimators::{CrossDenominator, EstimatorKind, MmKeyVariance, VarianceOptions};
use crate::optimizer::SearchConfig;
use crate::security::{QuantileConvention, SecurityOptions};

macro_rules! config_err {
    ($($arg:tt)*) => { Error::Config(format!($($arg)*)) };
}

/// A list of distances, either `start:stop:step` (inclusive) or
/// comma-separated values.
#[derive(Debug, Clone, PartialEq)]
pub enum DistanceGrid {
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

impl DistanceGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            DistanceGrid::List(v) => v.clone(),
            DistanceGrid::Range { start, stop, step } => {
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..count).map(|i| start + i as f64 * step).collect()
            }
        }
    }
}

impl fmt::Display for DistanceGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistanceGrid::Range { start, stop, step } => write!(f, "{start}:{stop}:{step}"),
            DistanceGrid::List(v) => write!(f, "{}", join(v)),
        }
    }
}

impl FromStr for DistanceGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let grid = if s.contains(':') {
            let parts: Vec<&str> = s.split(':').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(config_err!("range `{s}` must be start:stop:step"));
            }
            let start = parse_f64(parts[0])?;
            let stop = parse_f64(parts[1])?;
            let step = parse_f64(parts[2])?;
            if !(step > 0.0) || stop < start {
                return Err(config_err!("range `{s}` needs step > 0 and stop >= start"));
            }
            DistanceGrid::Range { start, stop, step }
        } else {
            DistanceGrid::List(parse_list(s, parse_f64)?)
        };
        if grid.values().iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(config_err!("distances must be finite and >= 0: `{s}`"));
        }
        Ok(grid)
    }
}

/// How the blend weights of the optimal estimators are evaluated in
/// Monte Carlo runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightEval {
    #[default]
    PlugIn,
    Truth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub v_a: f64,
    pub xi: f64,
    pub n_total: usize,
    pub m: usize,
    pub beta: f64,
    pub v_m2: f64,
    pub epsilon_pe: f64,
    pub loss_db_per_km: f64,
    /// Theory curves of the standard-deviation figure.
    pub distances: DistanceGrid,
    /// Distances simulated by Monte Carlo.
    pub mc_distances: DistanceGrid,
    /// Distances of the key-rate and optimal-parameter figures.
    pub keyrate_distances: DistanceGrid,
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub n_values: Vec<usize>,
    pub fig3_n_total: usize,
    pub output_dir: PathBuf,
    pub convention: QuantileConvention,
    pub mm_key_variance: MmKeyVariance,
    pub cross_denominator: CrossDenominator,
    pub asymptotic_includes_beta: bool,
    pub weight_eval: WeightEval,
    pub search: SearchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            v_a: 3.0,
            xi: 0.01,
            n_total: 100_000,
            m: 50_000,
            beta: 0.95,
            v_m2: 10.0,
            epsilon_pe: 1e-10,
            loss_db_per_km: 0.2,
            distances: DistanceGrid::Range { start: 0.0, stop: 200.0, step: 2.0 },
            mc_distances: DistanceGrid::List(vec![0.0, 20.0, 50.0, 100.0]),
            keyrate_distances: DistanceGrid::Range { start: 0.0, stop: 200.0, step: 2.0 },
            trials: 2000,
            seed: 1,
            estimators: vec![EstimatorKind::NoiseMle, EstimatorKind::NoiseMm, EstimatorKind::NoiseOpt],
            n_values: vec![100_000, 10_000_000, 1_000_000_000, 1_000_000_000_000],
            fig3_n_total: 1_000_000_000,
            output_dir: PathBuf::from("out"),
            convention: QuantileConvention::Erf,
            mm_key_variance: MmKeyVariance::Derived,
            cross_denominator: CrossDenominator::KeySubset,
            asymptotic_includes_beta: true,
            weight_eval: WeightEval::PlugIn,
            search: SearchConfig::default(),
        }
    }
}

const KEYS: &[&str] = &[
    "V_A",
    "xi",
    "N",
    "m",
    "beta",
    "V_M2",
    "epsilon_PE",
    "loss_db_per_km",
    "distances",
    "mc_distances",
    "keyrate_distances",
    "trials",
    "seed",
    "estimators",
    "N_values",
    "fig3_N",
    "output_dir",
    "convention",
    "mm_key_variance",
    "cross_denominator",
    "asymptotic_includes_beta",
    "weight_eval",
    "V_A_min",
    "V_A_max",
    "m_fraction_min",
    "m_fraction_max",
    "grid_V_A",
    "grid_m_fraction",
    "max_iterations",
];

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| config_err!("`{s}` is not a finite number"))
}

/// Accepts plain integers and exact scientific notation such as `1e9`.
fn parse_count(s: &str) -> Result<usize> {
    let s = s.trim();
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let v = parse_f64(s)?;
    if v >= 0.0 && v.fract() == 0.0 && v <= 9_007_199_254_740_992.0 {
        Ok(v as usize)
    } else {
        Err(config_err!("`{s}` is not a non-negative integer"))
    }
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let v = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(item)
        .collect::<Result<Vec<T>>>()?;
    if v.is_empty() {
        return Err(config_err!("empty list"));
    }
    Ok(v)
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(config_err!("`{other}` is not a boolean")),
    }
}

fn parse_enum<T: FromStr>(s: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| config_err!("{e}"))
}

fn mm_key_variance_str(v: MmKeyVariance) -> &'static str {
    match v {
        MmKeyVariance::Derived => "derived",
        MmKeyVariance::Printed => "printed",
    }
}

fn cross_str(v: CrossDenominator) -> &'static str {
    match v {
        CrossDenominator::KeySubset => "key",
        CrossDenominator::Total => "total",
    }
}

impl ExperimentConfig {
    /// Parses configuration text on top of the defaults. Everything after
    /// `#` on a line is a comment. Unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err!("line {}: expected `key = value`", lineno + 1))?;
            let key = key.trim();
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(config_err!("line {}: unknown key `{key}`", lineno + 1));
            };
            if seen.contains(&known) {
                return Err(config_err!("line {}: duplicate key `{key}`", lineno + 1));
            }
            seen.push(known);
            config
                .set(known, value.trim())
                .map_err(|e| config_err!("line {}: {key}: {}", lineno + 1, strip(&e)))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "V_A" => self.v_a = parse_f64(value)?,
            "xi" => self.xi = parse_f64(value)?,
            "N" => self.n_total = parse_count(value)?,
            "m" => self.m = parse_count(value)?,
            "beta" => self.beta = parse_f64(value)?,
            "V_M2" => self.v_m2 = parse_f64(value)?,
            "epsilon_PE" => self.epsilon_pe = parse_f64(value)?,
            "loss_db_per_km" => self.loss_db_per_km = parse_f64(value)?,
            "distances" => self.distances = value.parse()?,
            "mc_distances" => self.mc_distances = value.parse()?,
            "keyrate_distances" => self.keyrate_distances = value.parse()?,
            "trials" => self.trials = parse_count(value)?,
            "seed" => {
                self.seed = value
                    .trim()
                    .parse()
                    .map_err(|_| config_err!("`{value}` is not a 64-bit unsigned seed"))?
            }
            "estimators" => self.estimators = parse_list(value, parse_enum)?,
            "N_values" => self.n_values = parse_list(value, parse_count)?,
            "fig3_N" => self.fig3_n_total = parse_count(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value.trim()),
            "convention" => self.convention = parse_enum(value)?,
            "mm_key_variance" => {
                self.mm_key_variance = match value.trim() {
                    "derived" => MmKeyVariance::Derived,
                    "printed" => MmKeyVariance::Printed,
                    other => return Err(config_err!("`{other}` is not derived|printed")),
                }
            }
            "cross_denominator" => {
                self.cross_denominator = match value.trim() {
                    "key" => CrossDenominator::KeySubset,
                    "total" => CrossDenominator::Total,
                    other => return Err(config_err!("`{other}` is not key|total")),
                }
            }
            "asymptotic_includes_beta" => self.asymptotic_includes_beta = parse_bool(value)?,
            "weight_eval" => {
                self.weight_eval = match value.trim() {
                    "plugin" => WeightEval::PlugIn,
                    "truth" => WeightEval::Truth,
                    other => return Err(config_err!("`{other}` is not plugin|truth")),
                }
            }
            "V_A_min" => self.search.v_a_min = parse_f64(value)?,
            "V_A_max" => self.search.v_a_max = parse_f64(value)?,
            "m_fraction_min" => self.search.m_fraction_min = parse_f64(value)?,
            "m_fraction_max" => self.search.m_fraction_max = parse_f64(value)?,
            "grid_V_A" => self.search.grid_v_a = parse_count(value)?,
            "grid_m_fraction" => self.search.grid_fraction = parse_count(value)?,
            "max_iterations" => self.search.max_iterations = parse_count(value)?,
            other => return Err(config_err!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::Config(msg)) };
        check(self.v_a > 0.0, format!("V_A = {} must be > 0", self.v_a))?;
        check(self.xi >= 0.0, format!("xi = {} must be >= 0", self.xi))?;
        check(self.n_total >= 2, format!("N = {} must be >= 2", self.n_total))?;
        check(
            self.m >= 2 && self.m < self.n_total,
            format!("m = {} must satisfy 2 <= m < N", self.m),
        )?;
        check(self.beta > 0.0 && self.beta <= 1.0, format!("beta = {} not in (0, 1]", self.beta))?;
        check(self.v_m2 >= 0.0, format!("V_M2 = {} must be >= 0", self.v_m2))?;
        check(
            self.epsilon_pe > 0.0 && self.epsilon_pe < 1.0,
            format!("epsilon_PE = {} not in (0, 1)", self.epsilon_pe),
        )?;
        check(self.loss_db_per_km >= 0.0, format!("loss_db_per_km = {} must be >= 0", self.loss_db_per_km))?;
        check(!self.n_values.is_empty(), "N_values is empty".into())?;
        check(self.n_values.iter().all(|&n| n >= 2), "every N_values entry must be >= 2".into())?;
        check(self.fig3_n_total >= 2, "fig3_N must be >= 2".into())?;
        for kind in &self.estimators {
            check(
                crate::security::KEY_RATE_ESTIMATORS.contains(kind),
                format!("estimator {kind} cannot drive a key rate"),
            )?;
        }
        self.search.validate().map_err(|e| Error::Config(strip(&e)))
    }

    pub fn security_options(&self) -> SecurityOptions {
        SecurityOptions { convention: self.convention, variance: self.variance_options() }
    }

    pub fn variance_options(&self) -> VarianceOptions {
        VarianceOptions { mm_key: self.mm_key_variance, cross: self.cross_denominator }
    }

    /// Canonical `key = value` text; parsing it yields the same config.
    pub fn to_text(&self) -> String {
        let s = &self.search;
        let lines = [
            format!("V_A = {}", self.v_a),
            format!("xi = {}", self.xi),
            format!("N = {}", self.n_total),
            format!("m = {}", self.m),
            format!("beta = {}", self.beta),
            format!("V_M2 = {}", self.v_m2),
            format!("epsilon_PE = {:e}", self.epsilon_pe),
            format!("loss_db_per_km = {}", self.loss_db_per_km),
            format!("distances = {}", self.distances),
            format!("mc_distances = {}", self.mc_distances),
            format!("keyrate_distances = {}", self.keyrate_distances),
            format!("trials = {}", self.trials),
            format!("seed = {}", self.seed),
            format!("estimators = {}", join(&self.estimators)),
            format!("N_values = {}", join(&self.n_values)),
            format!("fig3_N = {}", self.fig3_n_total),
            format!("output_dir = {}", self.output_dir.display()),
            format!("convention = {}", self.convention),
            format!("mm_key_variance = {}", mm_key_variance_str(self.mm_key_variance)),
            format!("cross_denominator = {}", cross_str(self.cross_denominator)),
            format!("asymptotic_includes_beta = {}", self.asymptotic_includes_beta),
            format!(
                "weight_eval = {}",
                match self.weight_eval {
                    WeightEval::PlugIn => "plugin",
                    WeightEval::Truth => "truth",
                }
            ),
            format!("V_A_min = {}", s.v_a_min),
            format!("V_A_max = {}", s.v_a_max),
            format!("m_fraction_min = {}", s.m_fraction_min),
            format!("m_fraction_max = {}", s.m_fraction_max),
            format!("grid_V_A = {}", s.grid_v_a),
            format!("grid_m_fraction = {}", s.grid_fraction),
            format!("max_iterations = {}", s.max_iterations),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

/// Drops the `config error: ` prefix when re-wrapping an error.
fn strip(e: &Error) -> String {
    match e {
        Error::Config(msg) | Error::Domain(msg) => msg.clone(),
        other => other.to_string(),
    }
}
