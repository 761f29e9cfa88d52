//! Channel-noise and transmission estimators.
//!
//! Naming follows the data subsets: a single prime marks a statistic from
//! the `m` revealed states, a double prime one from the `n = N - m` key
//! states, and unprimed full-set statistics use all `N` states. All second
//! moments use the zero-mean convention `(1/M) sum v_i^2`.

mod delta;
mod suite;
mod theory;

use std::fmt;
use std::str::FromStr;

pub use delta::{
    build_cj_mm, build_cj_mm_key, build_cj_mm_known_va, delta_method_mean,
    delta_method_variance, mm_gradient, mm_key_gradient, mm_known_va_gradient, mm_statistic,
    var_mm_delta, var_mm_key_delta, var_mm_known_va_delta, CrossDenominator, Statistic,
    StatisticsCovariance, PSD_TOLERANCE,
};
pub use suite::{estimate_suite, EstimateSuite, VarianceEval};
pub use theory::{
    theoretical_std, theoretical_variance, var_sigma2_mle, var_sigma2_mm,
    var_sigma2_mm_key, var_sigma2_mm_key_derived, var_sigma2_mm_key_printed,
    var_sigma2_mm_known_va, var_sigma2_opt, var_t_mle, var_t_second_mod, var_vxi_opt,
    var_vxi_second_mod, DesignPoint, MmKeyVariance, VarianceOptions,
};

use crate::channel_sim::{SessionData, SessionSplit};
use crate::error::{degenerate, domain, Error, Result};

/// Which quantity an [`Estimate`] refers to and how it was formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    /// Least-squares slope `t` on the revealed states.
    TransmissionMle,
    /// Residual noise `sigma^2` on the revealed states.
    NoiseMle,
    /// `sigma_B^2 - t^2 V_A` with Alice's nominal modulation variance.
    NoiseMmKnownVa,
    /// `sigma_B^2 - t^2 sigma_A^2` with full-set moments.
    NoiseMm,
    /// Method of moments restricted to the key states.
    NoiseMmKey,
    /// Variance-optimal blend of [`NoiseMle`](Self::NoiseMle) and
    /// [`NoiseMmKey`](Self::NoiseMmKey).
    NoiseOpt,
    /// Power transmission from the second modulation.
    TransmissionSecondMod,
    /// Output-referred excess noise from the second modulation.
    ExcessNoiseSecondMod,
    /// Variance-optimal blend of [`ExcessNoiseSecondMod`](Self::ExcessNoiseSecondMod)
    /// and `sigma_MLE^2 - 1`.
    ExcessNoiseOpt,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 9] = [
        EstimatorKind::TransmissionMle,
        EstimatorKind::NoiseMle,
        EstimatorKind::NoiseMmKnownVa,
        EstimatorKind::NoiseMm,
        EstimatorKind::NoiseMmKey,
        EstimatorKind::NoiseOpt,
        EstimatorKind::TransmissionSecondMod,
        EstimatorKind::ExcessNoiseSecondMod,
        EstimatorKind::ExcessNoiseOpt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::TransmissionMle => "t_mle",
            EstimatorKind::NoiseMle => "sigma2_mle",
            EstimatorKind::NoiseMmKnownVa => "sigma2_mm_va",
            EstimatorKind::NoiseMm => "sigma2_mm",
            EstimatorKind::NoiseMmKey => "sigma2_mmpp",
            EstimatorKind::NoiseOpt => "sigma2_opt",
            EstimatorKind::TransmissionSecondMod => "t_m2",
            EstimatorKind::ExcessNoiseSecondMod => "vxi_m2",
            EstimatorKind::ExcessNoiseOpt => "vxi_opt",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let kind = match key.as_str() {
            "t_mle" => EstimatorKind::TransmissionMle,
            "sigma2_mle" | "mle" => EstimatorKind::NoiseMle,
            "sigma2_mm_va" | "mm_va" => EstimatorKind::NoiseMmKnownVa,
            "sigma2_mm" | "mm" => EstimatorKind::NoiseMm,
            "sigma2_mmpp" | "mmpp" => EstimatorKind::NoiseMmKey,
            "sigma2_opt" | "opt" => EstimatorKind::NoiseOpt,
            "t_m2" | "t_secondmod" => EstimatorKind::TransmissionSecondMod,
            "vxi_m2" | "vxi_secondmod" => EstimatorKind::ExcessNoiseSecondMod,
            "vxi_opt" => EstimatorKind::ExcessNoiseOpt,
            _ => return Err(domain!("unknown estimator `{s}`")),
        };
        Ok(kind)
    }
}

/// An estimator value with its (theoretical) variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub kind: EstimatorKind,
    pub value: f64,
    pub variance: f64,
}

impl Estimate {
    pub fn new(kind: EstimatorKind, value: f64, variance: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Numerical(format!("{kind} estimate is not finite: {value}")));
        }
        if !(variance >= 0.0) {
            return Err(Error::Numerical(format!("{kind} variance is negative or NaN: {variance}")));
        }
        Ok(Self { kind, value, variance })
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// The public moments used by the method-of-moments estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatisticsVector {
    /// Full-set `(1/N) sum x^2`.
    pub sigma2_a: f64,
    /// Full-set `(1/N) sum y^2`.
    pub sigma2_b: f64,
    /// Revealed-subset `(1/m) sum x y`.
    pub sigma_apbp: f64,
    /// Revealed-subset `(1/m) sum x^2`.
    pub sigma2_ap: f64,
    /// Key-subset `(1/n) sum x^2`.
    pub sigma2_app: f64,
    /// Key-subset `(1/n) sum y^2`.
    pub sigma2_bpp: f64,
    pub m: usize,
    pub n: usize,
}

impl StatisticsVector {
    /// Computes every moment from one partition. Full-set sums are the sums
    /// of the two subset sums, so `N sigma2_A = m sigma2_A' + n sigma2_A''`
    /// holds to rounding.
    pub fn from_session(session: &SessionData, split: &SessionSplit) -> Result<Self> {
        if split.total() != session.len() {
            return Err(domain!(
                "split covers {} indices, session has {}",
                split.total(),
                session.len()
            ));
        }
        let (m, n) = (split.revealed(), split.key());
        let mut pe = [0.0; 3];
        for &i in &split.pe_indices {
            let (x, y) = (session.x[i], session.y[i]);
            pe[0] += x * x;
            pe[1] += y * y;
            pe[2] += x * y;
        }
        let mut key = [0.0; 2];
        for &i in &split.key_indices {
            let (x, y) = (session.x[i], session.y[i]);
            key[0] += x * x;
            key[1] += y * y;
        }
        let total = (m + n) as f64;
        let per = |sum: f64, count: usize| if count == 0 { 0.0 } else { sum / count as f64 };
        Ok(Self {
            sigma2_a: (pe[0] + key[0]) / total,
            sigma2_b: (pe[1] + key[1]) / total,
            sigma_apbp: per(pe[2], m),
            sigma2_ap: per(pe[0], m),
            sigma2_app: per(key[0], n),
            sigma2_bpp: per(key[1], n),
            m,
            n,
        })
    }

    pub fn total(&self) -> usize {
        self.m + self.n
    }

    /// Transmission amplitude estimate `sigma_A'B' / sigma_A'^2`.
    pub fn t_hat(&self) -> Result<f64> {
        if self.m == 0 || !(self.sigma2_ap > 0.0) {
            return Err(degenerate!("revealed second moment of x is zero"));
        }
        Ok(self.sigma_apbp / self.sigma2_ap)
    }
}

/// `(1/M) sum v_i^2`.
pub fn second_moment(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(domain!("second moment of an empty vector"));
    }
    Ok(v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64)
}

/// `(1/M) sum a_i b_i`.
pub fn cross_moment(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(domain!("length mismatch {} vs {}", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(domain!("cross moment of empty vectors"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64)
}

fn residual_sum(x: &[f64], y: &[f64], slope: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - slope * a;
            r * r
        })
        .sum()
}

/// Least-squares slope `sum x y / sum x^2` on the revealed states, with
/// variance `sigma_hat^2 / sum x^2` from the paired residual noise estimate.
pub fn estimate_t_mle(x_pe: &[f64], y_pe: &[f64]) -> Result<Estimate> {
    if x_pe.len() != y_pe.len() {
        return Err(domain!("length mismatch {} vs {}", x_pe.len(), y_pe.len()));
    }
    let sxx: f64 = x_pe.iter().map(|a| a * a).sum();
    if !(sxx > 0.0) {
        return Err(degenerate!("sum of x^2 over revealed states is zero"));
    }
    let sxy: f64 = x_pe.iter().zip(y_pe).map(|(a, b)| a * b).sum();
    let t_hat = sxy / sxx;
    let sigma2 = residual_sum(x_pe, y_pe, t_hat) / x_pe.len() as f64;
    Estimate::new(EstimatorKind::TransmissionMle, t_hat, sigma2 / sxx)
}

/// Residual noise `(1/m) sum (y - t_hat x)^2` with the exact chi-square
/// variance `2 s^4 (m-1) / m^2` evaluated at the estimate.
pub fn estimate_sigma2_mle(x_pe: &[f64], y_pe: &[f64], t_hat: f64) -> Result<Estimate> {
    if x_pe.len() != y_pe.len() {
        return Err(domain!("length mismatch {} vs {}", x_pe.len(), y_pe.len()));
    }
    let m = x_pe.len();
    if m < 2 {
        return Err(degenerate!("noise MLE needs m >= 2 revealed states, got {m}"));
    }
    let value = residual_sum(x_pe, y_pe, t_hat) / m as f64;
    Estimate::new(EstimatorKind::NoiseMle, value, var_sigma2_mle(value, m))
}

fn plug_in_sigma2(value: f64) -> f64 {
    value.max(0.0)
}

/// `sigma_B^2 - t_hat^2 V_A` using Alice's nominal modulation variance.
pub fn estimate_sigma2_mm_known_va(
    sigma2_b: f64,
    t_hat: f64,
    v_a: f64,
    m: usize,
    n_total: usize,
) -> Result<Estimate> {
    if !(v_a > 0.0 && v_a.is_finite()) {
        return Err(domain!("V_A = {v_a} must be > 0"));
    }
    if !sigma2_b.is_finite() || !t_hat.is_finite() {
        return Err(domain!("non-finite moment input"));
    }
    if m == 0 || m > n_total {
        return Err(degenerate!("need 0 < m <= N, got m = {m}, N = {n_total}"));
    }
    let value = sigma2_b - t_hat * t_hat * v_a;
    let var = var_sigma2_mm_known_va(v_a, t_hat, plug_in_sigma2(value), m, n_total);
    Estimate::new(EstimatorKind::NoiseMmKnownVa, value, var)
}

/// `sigma_B^2 - t_hat^2 sigma_A^2` with `t_hat = sigma_A'B' / sigma_A'^2`.
pub fn estimate_sigma2_mm(stats: &StatisticsVector) -> Result<Estimate> {
    let t_hat = stats.t_hat()?;
    let value = stats.sigma2_b - t_hat * t_hat * stats.sigma2_a;
    let var = var_sigma2_mm(
        stats.sigma2_a,
        t_hat,
        plug_in_sigma2(value),
        stats.m,
        stats.total(),
    );
    Estimate::new(EstimatorKind::NoiseMm, value, var)
}

/// Key-subset moment form `sigma_B''^2 - t_hat^2 sigma_A''^2`. Computable
/// from public moments without revealing any key state.
pub fn estimate_sigma2_mm_key(
    stats: &StatisticsVector,
    t_hat: f64,
    options: &VarianceOptions,
) -> Result<Estimate> {
    if stats.n == 0 {
        return Err(degenerate!("no key states for the key-subset estimator"));
    }
    if stats.m == 0 {
        return Err(degenerate!("no revealed states to estimate t"));
    }
    let value = stats.sigma2_bpp - t_hat * t_hat * stats.sigma2_app;
    let var = var_sigma2_mm_key(
        stats.sigma2_app,
        t_hat,
        plug_in_sigma2(value),
        stats.m,
        stats.n,
        options,
    )?;
    Estimate::new(EstimatorKind::NoiseMmKey, value, var)
}

/// Residual form `(1/n) sum (y - t_hat x)^2` over the key states. Needs the
/// key data itself; used for the split identity.
pub fn sigma2_mm_key_residual(x_key: &[f64], y_key: &[f64], t_hat: f64) -> Result<f64> {
    if x_key.len() != y_key.len() {
        return Err(domain!("length mismatch {} vs {}", x_key.len(), y_key.len()));
    }
    if x_key.is_empty() {
        return Err(degenerate!("no key states"));
    }
    Ok(residual_sum(x_key, y_key, t_hat) / x_key.len() as f64)
}

/// Result of [`combine_optimal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Combination {
    /// Weight of the first estimator.
    pub alpha: f64,
    pub value: f64,
    pub variance: f64,
}

impl Combination {
    pub fn into_estimate(self, kind: EstimatorKind) -> Result<Estimate> {
        Estimate::new(kind, self.value, self.variance)
    }
}

/// Minimum-variance linear blend of two independent estimators:
/// `alpha = Var2 / (Var1 + Var2)`, variance `Var1 Var2 / (Var1 + Var2)`.
pub fn combine_optimal(e1: &Estimate, e2: &Estimate) -> Result<Combination> {
    combine_values(e1.value, e1.variance, e2.value, e2.variance)
}

pub(crate) fn combine_values(v1: f64, var1: f64, v2: f64, var2: f64) -> Result<Combination> {
    if !(var1 >= 0.0 && var2 >= 0.0) {
        return Err(domain!("variances must be >= 0, got {var1}, {var2}"));
    }
    if var1 == 0.0 && var2 == 0.0 {
        return Err(degenerate!("both estimators have zero variance"));
    }
    let (alpha, variance) = match (var1.is_infinite(), var2.is_infinite()) {
        (true, true) => return Err(degenerate!("both estimators have infinite variance")),
        (false, true) => (1.0, var1),
        (true, false) => (0.0, var2),
        (false, false) => {
            let sum = var1 + var2;
            (var2 / sum, var1 * var2 / sum)
        }
    };
    Ok(Combination {
        alpha,
        value: alpha * v1 + (1.0 - alpha) * v2,
        variance: variance.min(var1).min(var2),
    })
}

fn second_mod_inputs<'a>(x_m2: &'a [f64], y: &'a [f64], v_m2: f64) -> Result<usize> {
    if !(v_m2 > 0.0 && v_m2.is_finite()) {
        return Err(domain!("second modulation variance must be > 0, got {v_m2}"));
    }
    if x_m2.len() != y.len() {
        return Err(domain!("length mismatch {} vs {}", x_m2.len(), y.len()));
    }
    if y.is_empty() {
        return Err(domain!("empty session"));
    }
    Ok(y.len())
}

/// Second-modulation transmission `(sum x_M2 y)^2 / (N V_M2)^2`. The
/// variance is evaluated with the plug-in `V_N`, the residual variance of
/// `y` around `sqrt(T_hat) x_M2`.
pub fn estimate_t_second_mod(x_m2: &[f64], y: &[f64], v_m2: f64) -> Result<Estimate> {
    let n = second_mod_inputs(x_m2, y, v_m2)?;
    let s: f64 = x_m2.iter().zip(y).map(|(a, b)| a * b).sum();
    let amp = s / (n as f64 * v_m2);
    let t_hat = amp * amp;
    let v_n = residual_sum(x_m2, y, t_hat.sqrt()) / n as f64;
    Estimate::new(
        EstimatorKind::TransmissionSecondMod,
        t_hat,
        var_t_second_mod(t_hat, v_n, v_m2, n),
    )
}

/// Second-modulation excess noise
/// `(1/N) sum (y - sqrt(T_hat) x_M2)^2 - T_hat V_A - 1`, returned unclamped.
pub fn estimate_vxi_second_mod(
    x_m2: &[f64],
    y: &[f64],
    t_hat: &Estimate,
    v_a: f64,
) -> Result<Estimate> {
    if x_m2.len() != y.len() {
        return Err(domain!("length mismatch {} vs {}", x_m2.len(), y.len()));
    }
    if y.is_empty() {
        return Err(domain!("empty session"));
    }
    if !(t_hat.value >= 0.0) {
        return Err(domain!("T_hat = {} must be >= 0", t_hat.value));
    }
    let v_n = residual_sum(x_m2, y, t_hat.value.sqrt()) / y.len() as f64;
    let value = v_n - t_hat.value * v_a - 1.0;
    let var = 2.0 * v_n * v_n / y.len() as f64 + v_a * v_a * t_hat.variance;
    Estimate::new(EstimatorKind::ExcessNoiseSecondMod, value, var)
}
