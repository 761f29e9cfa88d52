//! Two-mode covariance matrices, the Holevo bound for collective Gaussian
//! attacks under reverse reconciliation with homodyne detection, and the
//! resulting asymptotic and finite-size key rates.
//!
//! Covariance matrices use the entanglement-based picture in shot-noise
//! units: `Gamma = [[a I, c Z], [c Z, b I]]` with `Z = diag(1, -1)`.

use std::fmt;
use std::str::FromStr;

use statrs::function::erf::erfc_inv;

use crate::error::{domain, Error, Result};
use crate::estimators::{theoretical_variance, DesignPoint, EstimatorKind, VarianceOptions};

/// Tolerance for eigenvalues that should be at least one.
pub const EIGEN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeCovariance {
    /// Alice's diagonal, `V_A + 1`.
    pub a: f64,
    /// Bob's diagonal.
    pub b: f64,
    /// Off-diagonal magnitude.
    pub c: f64,
}

impl TwoModeCovariance {
    /// `a b - c^2`; at least one for a physical state.
    pub fn determinant_block(&self) -> f64 {
        self.a * self.b - self.c * self.c
    }

    pub fn is_physical(&self) -> bool {
        self.a >= 1.0 - EIGEN_TOLERANCE
            && self.b >= 1.0 - EIGEN_TOLERANCE
            && self.determinant_block() >= 1.0 - EIGEN_TOLERANCE
            && symplectic_eigenvalues(self).is_ok()
    }
}

/// Entanglement-based covariance matrix of the true channel.
pub fn covariance_matrix(v_a: f64, transmission: f64, xi: f64) -> Result<TwoModeCovariance> {
    if !(v_a > 0.0 && v_a.is_finite()) {
        return Err(domain!("V_A = {v_a} must be > 0"));
    }
    if !(0.0..=1.0).contains(&transmission) {
        return Err(domain!("T = {transmission} not in [0, 1]"));
    }
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(domain!("xi = {xi} must be >= 0"));
    }
    Ok(TwoModeCovariance {
        a: v_a + 1.0,
        b: transmission * v_a + 1.0 + transmission * xi,
        c: (transmission * (v_a * v_a + 2.0 * v_a)).sqrt(),
    })
}

/// Normal quantile convention for the worst-case bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantileConvention {
    /// `z = erfinv(1 - eps/2)`.
    #[default]
    Erf,
    /// Two-sided normal tail, `z = sqrt(2) erfinv(1 - eps)`.
    Gaussian,
}

impl fmt::Display for QuantileConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantileConvention::Erf => "erf",
            QuantileConvention::Gaussian => "gaussian",
        })
    }
}

impl FromStr for QuantileConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "erf" => Ok(QuantileConvention::Erf),
            "gaussian" => Ok(QuantileConvention::Gaussian),
            other => Err(domain!("unknown quantile convention `{other}` (erf|gaussian)")),
        }
    }
}

/// Confidence multiplier for failure probability `epsilon_pe`. Computed
/// through `erfc_inv` so tiny failure probabilities keep full precision.
pub fn z_quantile(epsilon_pe: f64, convention: QuantileConvention) -> Result<f64> {
    if !(epsilon_pe > 0.0 && epsilon_pe < 1.0) {
        return Err(domain!("epsilon_PE = {epsilon_pe} not in (0, 1)"));
    }
    Ok(match convention {
        QuantileConvention::Erf => erfc_inv(epsilon_pe / 2.0),
        QuantileConvention::Gaussian => std::f64::consts::SQRT_2 * erfc_inv(epsilon_pe),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseParams {
    pub t_min: f64,
    pub sigma2_max: f64,
    pub z_quantile: f64,
    pub epsilon_pe: f64,
}

pub fn worst_case_params(
    t_hat: f64,
    std_t: f64,
    sigma2_hat: f64,
    std_sigma2: f64,
    epsilon_pe: f64,
    convention: QuantileConvention,
) -> Result<WorstCaseParams> {
    if !(std_t >= 0.0 && std_sigma2 >= 0.0) {
        return Err(domain!("standard deviations must be >= 0"));
    }
    let z = z_quantile(epsilon_pe, convention)?;
    Ok(WorstCaseParams {
        t_min: t_hat - z * std_t,
        sigma2_max: sigma2_hat + z * std_sigma2,
        z_quantile: z,
        epsilon_pe,
    })
}

/// Worst-case matrix plus the clamps applied to build it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseCovariance {
    pub matrix: TwoModeCovariance,
    /// `t_min` was negative and replaced by zero.
    pub t_min_clamped: bool,
    /// `sigma2_max` was below vacuum noise and raised to one.
    pub noise_clamped: bool,
}

pub fn worst_case_covariance(wc: &WorstCaseParams, v_a: f64) -> Result<WorstCaseCovariance> {
    if !(v_a > 0.0 && v_a.is_finite()) {
        return Err(domain!("V_A = {v_a} must be > 0"));
    }
    if !wc.t_min.is_finite() || !wc.sigma2_max.is_finite() {
        return Err(domain!("non-finite worst-case parameters"));
    }
    let t_min_clamped = wc.t_min < 0.0;
    let t_min = wc.t_min.max(0.0);
    let noise_clamped = wc.sigma2_max < 1.0;
    let sigma2_max = wc.sigma2_max.max(1.0);
    Ok(WorstCaseCovariance {
        matrix: TwoModeCovariance {
            a: v_a + 1.0,
            b: t_min * t_min * v_a + sigma2_max,
            c: t_min * (v_a * v_a + 2.0 * v_a).sqrt(),
        },
        t_min_clamped,
        noise_clamped,
    })
}

/// Shannon information of the scalar Gaussian channel, bits per symbol.
pub fn mutual_information(v_a: f64, transmission: f64, xi: f64) -> f64 {
    0.5 * (1.0 + transmission * v_a / (1.0 + transmission * xi)).log2()
}

fn clamp_to_one(nu: f64, what: &str) -> Result<f64> {
    if nu >= 1.0 {
        Ok(nu)
    } else if nu >= 1.0 - EIGEN_TOLERANCE {
        Ok(1.0)
    } else {
        Err(Error::Numerical(format!("{what} = {nu} below vacuum; matrix is unphysical")))
    }
}

/// Symplectic eigenvalues `(nu1, nu2)` with `nu1 >= nu2 >= 1`.
pub fn symplectic_eigenvalues(g: &TwoModeCovariance) -> Result<(f64, f64)> {
    let delta = g.a * g.a + g.b * g.b - 2.0 * g.c * g.c;
    let det = g.a * g.b - g.c * g.c;
    let disc = delta * delta - 4.0 * det * det;
    if disc < -EIGEN_TOLERANCE {
        return Err(Error::Numerical(format!("negative discriminant {disc:e}")));
    }
    let root = disc.max(0.0).sqrt();
    let nu1 = ((delta + root) / 2.0).max(0.0).sqrt();
    let nu2 = ((delta - root) / 2.0).max(0.0).sqrt();
    Ok((clamp_to_one(nu1, "nu1")?, clamp_to_one(nu2, "nu2")?))
}

/// Symplectic eigenvalue of Alice's mode conditioned on Bob's homodyne
/// outcome, from the Schur complement `diag(a - c^2/b, a)`.
pub fn conditional_eigenvalue_homodyne(g: &TwoModeCovariance) -> Result<f64> {
    if !(g.b > 0.0) {
        return Err(domain!("b = {} must be > 0", g.b));
    }
    let reduced = g.a - g.c * g.c / g.b;
    if reduced < -EIGEN_TOLERANCE {
        return Err(Error::Numerical(format!("conditional variance {reduced:e} < 0")));
    }
    clamp_to_one((g.a * reduced.max(0.0)).sqrt(), "nu3")
}

fn g_unchecked(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (x + 1.0) * (x + 1.0).log2() - x * x.log2()
    }
}

/// Bosonic entropy `G(x) = (x+1) log2(x+1) - x log2 x`, `G(0) = 0`.
pub fn g_entropy(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(domain!("G(x) needs x >= 0, got {x}"));
    }
    Ok(g_unchecked(x))
}

/// Holevo information between Bob's homodyne data and Eve, bits per symbol.
pub fn holevo_bound(g: &TwoModeCovariance) -> Result<f64> {
    let (nu1, nu2) = symplectic_eigenvalues(g)?;
    let nu3 = conditional_eigenvalue_homodyne(g)?;
    let s = g_unchecked((nu1 - 1.0) / 2.0) + g_unchecked((nu2 - 1.0) / 2.0)
        - g_unchecked((nu3 - 1.0) / 2.0);
    Ok(s.max(0.0))
}

/// A key rate before and after clamping negative values to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateValue {
    pub raw: f64,
    pub clamped: f64,
}

impl RateValue {
    fn new(raw: f64) -> Self {
        Self { raw, clamped: raw.max(0.0) }
    }
}

/// `beta I - S` at the true channel.
pub fn key_rate_asymptotic(v_a: f64, transmission: f64, xi: f64, beta: f64) -> Result<RateValue> {
    let g = covariance_matrix(v_a, transmission, xi)?;
    let info = mutual_information(v_a, transmission, xi);
    Ok(RateValue::new(beta * info - holevo_bound(&g)?))
}

/// Everything needed for a design-phase finite-size key rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteKeyInputs {
    pub v_a: f64,
    pub transmission: f64,
    pub xi: f64,
    pub beta: f64,
    pub n_total: usize,
    pub m: usize,
    pub epsilon_pe: f64,
    pub estimator: EstimatorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SecurityOptions {
    pub convention: QuantileConvention,
    pub variance: VarianceOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroReason {
    /// `m = 0` (or too few states for the estimator).
    NoEstimation,
    /// `m = N`, nothing left for the key.
    NoKeyStates,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateResult {
    pub mutual_information: f64,
    pub holevo: f64,
    /// Clamped at zero.
    pub key_rate: f64,
    pub key_rate_raw: f64,
    /// `n / N`.
    pub key_fraction: f64,
    pub worst_case: Option<WorstCaseParams>,
    pub zero_reason: Option<ZeroReason>,
    pub t_min_clamped: bool,
    pub noise_clamped: bool,
    pub inputs: FiniteKeyInputs,
}

impl KeyRateResult {
    /// `beta I - S(Gamma_eps)` before the `n/N` factor; `None` when the rate
    /// is zero for lack of states.
    pub fn bracket(&self) -> Option<f64> {
        self.zero_reason
            .is_none()
            .then_some(self.inputs.beta * self.mutual_information - self.holevo)
    }
}

pub const KEY_RATE_ESTIMATORS: [EstimatorKind; 3] =
    [EstimatorKind::NoiseMle, EstimatorKind::NoiseMm, EstimatorKind::NoiseOpt];

/// `(n/N) [beta I - S(Gamma_eps)]` with the worst-case matrix built from
/// the theoretical spreads of `t_hat` and the chosen noise estimator,
/// evaluated at the true parameters.
pub fn key_rate_finite(inputs: &FiniteKeyInputs, options: &SecurityOptions) -> Result<KeyRateResult> {
    let p = inputs;
    if !KEY_RATE_ESTIMATORS.contains(&p.estimator) {
        return Err(domain!("key rate needs one of sigma2_mle, sigma2_mm, sigma2_opt; got {}", p.estimator));
    }
    if !(p.beta > 0.0 && p.beta <= 1.0) {
        return Err(domain!("beta = {} not in (0, 1]", p.beta));
    }
    if p.m > p.n_total {
        return Err(domain!("m = {} exceeds N = {}", p.m, p.n_total));
    }
    let g_true = covariance_matrix(p.v_a, p.transmission, p.xi)?;
    let info = mutual_information(p.v_a, p.transmission, p.xi);
    let n = p.n_total - p.m;
    let zero = |reason| {
        Ok(KeyRateResult {
            mutual_information: info,
            holevo: holevo_bound(&g_true)?,
            key_rate: 0.0,
            key_rate_raw: 0.0,
            key_fraction: if p.n_total == 0 { 0.0 } else { n as f64 / p.n_total as f64 },
            worst_case: None,
            zero_reason: Some(reason),
            t_min_clamped: false,
            noise_clamped: false,
            inputs: *p,
        })
    };
    if p.m < 2 {
        return zero(ZeroReason::NoEstimation);
    }
    if n == 0 {
        return zero(ZeroReason::NoKeyStates);
    }

    let point = DesignPoint {
        v_a: p.v_a,
        transmission: p.transmission,
        xi: p.xi,
        m: p.m,
        n_total: p.n_total,
        v_m2: 0.0,
    };
    let sigma2 = point.sigma2();
    let std_t = theoretical_variance(EstimatorKind::TransmissionMle, &point, &options.variance)?.sqrt();
    let std_sigma2 = theoretical_variance(p.estimator, &point, &options.variance)?.sqrt();
    let wc = worst_case_params(
        point.amplitude(),
        std_t,
        sigma2,
        std_sigma2,
        p.epsilon_pe,
        options.convention,
    )?;
    let worst = worst_case_covariance(&wc, p.v_a)?;
    let holevo = holevo_bound(&worst.matrix)?;
    let key_fraction = n as f64 / p.n_total as f64;
    let raw = key_fraction * (p.beta * info - holevo);
    Ok(KeyRateResult {
        mutual_information: info,
        holevo,
        key_rate: raw.max(0.0),
        key_rate_raw: raw,
        key_fraction,
        worst_case: Some(wc),
        zero_reason: None,
        t_min_clamped: worst.t_min_clamped,
        noise_clamped: worst.noise_clamped,
        inputs: *p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn covariance_examples() {
        let g = covariance_matrix(3.0, 0.0, 0.2).unwrap();
        assert_eq!((g.a, g.b, g.c), (4.0, 1.0, 0.0));
        let g = covariance_matrix(3.0, 1.0, 0.0).unwrap();
        assert_eq!((g.a, g.b), (4.0, 4.0));
        assert!(close(g.c, 15f64.sqrt(), 1e-15));
        let g = covariance_matrix(3.0, 0.1, 0.01).unwrap();
        assert!(close(g.b, 1.301, 1e-12));
        assert!(close(g.c, 1.5f64.sqrt(), 1e-12));
        assert!(covariance_matrix(3.0, 1.5, 0.0).is_err());
    }

    #[test]
    fn quantiles() {
        let z = z_quantile(1e-10, QuantileConvention::Erf).unwrap();
        assert!(close(z, 4.65, 0.01), "{z}");
        let zg = z_quantile(1e-10, QuantileConvention::Gaussian).unwrap();
        // two-sided 1e-10 normal quantile
        assert!(close(zg, 6.4670, 1e-3), "{zg}");
        assert!(z_quantile(0.0, QuantileConvention::Erf).is_err());
        assert!(z_quantile(1.0, QuantileConvention::Erf).is_err());
        assert!("gaussian".parse::<QuantileConvention>().is_ok());
        assert!("other".parse::<QuantileConvention>().is_err());
    }

    #[test]
    fn worst_case_examples() {
        let wc = worst_case_params(0.9, 0.0, 1.1, 0.0, 1e-10, QuantileConvention::Erf).unwrap();
        assert_eq!((wc.t_min, wc.sigma2_max), (0.9, 1.1));
        let wc = worst_case_params(0.9, 0.01, 1.1, 0.0, 1e-10, QuantileConvention::Erf).unwrap();
        assert!(close(wc.t_min, 0.9 - wc.z_quantile * 0.01, 1e-15));
        assert!(close(wc.t_min, 0.8535, 1e-3));
        assert!(worst_case_params(0.9, 0.01, 1.1, 0.0, 2.0, QuantileConvention::Erf).is_err());
    }

    #[test]
    fn worst_case_covariance_examples() {
        let wc = WorstCaseParams { t_min: 0.3, sigma2_max: 1.05, z_quantile: 4.0, epsilon_pe: 1e-10 };
        let g = worst_case_covariance(&wc, 3.0).unwrap().matrix;
        assert_eq!(g.a, 4.0);
        assert!(close(g.b, 1.32, 1e-12));
        assert!(close(g.c, 0.3 * 15f64.sqrt(), 1e-12));

        let same = WorstCaseParams { t_min: 0.5f64.sqrt(), sigma2_max: 1.005, ..wc };
        let g = worst_case_covariance(&same, 3.0).unwrap().matrix;
        let direct = covariance_matrix(3.0, 0.5, 0.01).unwrap();
        assert!(close(g.b, direct.b, 1e-12) && close(g.c, direct.c, 1e-12));

        let neg = WorstCaseParams { t_min: -0.1, sigma2_max: 0.9, ..wc };
        let w = worst_case_covariance(&neg, 3.0).unwrap();
        assert!(w.t_min_clamped && w.noise_clamped);
        assert_eq!((w.matrix.c, w.matrix.b), (0.0, 1.0));
    }

    #[test]
    fn mutual_information_examples() {
        assert_eq!(mutual_information(3.0, 0.0, 0.01), 0.0);
        assert!(close(mutual_information(3.0, 1.0, 0.0), 1.0, 1e-15));
        assert!(close(mutual_information(3.0, 0.1, 0.01), 0.5 * (1.0 + 0.3 / 1.001f64).log2(), 1e-15));
        assert!(close(mutual_information(3.0, 0.1, 0.01), 0.1891, 1e-4));
    }

    #[test]
    fn eigenvalue_examples() {
        let (n1, n2) = symplectic_eigenvalues(&TwoModeCovariance { a: 4.0, b: 1.0, c: 0.0 }).unwrap();
        assert!(close(n1, 4.0, 1e-12) && close(n2, 1.0, 1e-12));
        let epr = covariance_matrix(3.0, 1.0, 0.0).unwrap();
        let (n1, n2) = symplectic_eigenvalues(&epr).unwrap();
        assert!(close(n1, 1.0, 1e-9) && close(n2, 1.0, 1e-9));
        assert!(close(conditional_eigenvalue_homodyne(&epr).unwrap(), 1.0, 1e-9));
        let c0 = TwoModeCovariance { a: 3.5, b: 2.0, c: 0.0 };
        assert_eq!(conditional_eigenvalue_homodyne(&c0).unwrap(), 3.5);
    }

    #[test]
    fn unphysical_matrices_are_rejected() {
        let bad = TwoModeCovariance { a: 4.0, b: 1.0, c: 3.0 };
        assert!(!bad.is_physical());
        assert!(holevo_bound(&bad).is_err());
    }

    #[test]
    fn g_entropy_examples() {
        assert_eq!(g_entropy(0.0).unwrap(), 0.0);
        assert!(close(g_entropy(1.0).unwrap(), 2.0, 1e-15));
        assert!(close(g_entropy(0.5).unwrap(), 1.5 * 1.5f64.log2() + 0.5, 1e-15));
        assert!(close(g_entropy(0.5).unwrap(), 1.3774, 1e-4));
        assert!(g_entropy(-0.1).is_err());
    }

    #[test]
    fn holevo_vanishes_for_pure_and_broken_channels() {
        assert!(holevo_bound(&covariance_matrix(3.0, 1.0, 0.0).unwrap()).unwrap() < 1e-9);
        assert!(holevo_bound(&covariance_matrix(3.0, 0.0, 0.0).unwrap()).unwrap() < 1e-9);
        assert!(holevo_bound(&covariance_matrix(3.0, 0.1, 0.01).unwrap()).unwrap() > 0.0);
    }

    #[test]
    fn asymptotic_rate_examples() {
        assert!(close(key_rate_asymptotic(3.0, 1.0, 0.0, 1.0).unwrap().raw, 1.0, 1e-9));
        assert!(close(key_rate_asymptotic(3.0, 1.0, 0.0, 0.95).unwrap().raw, 0.95, 1e-9));
        let broken = key_rate_asymptotic(3.0, 0.0, 0.01, 0.95).unwrap();
        assert!(broken.raw <= 0.0);
        assert_eq!(broken.clamped, 0.0);
    }

    fn inputs(m: usize, n_total: usize, eps: f64) -> FiniteKeyInputs {
        FiniteKeyInputs {
            v_a: 3.0,
            transmission: 0.3,
            xi: 0.01,
            beta: 0.95,
            n_total,
            m,
            epsilon_pe: eps,
            estimator: EstimatorKind::NoiseOpt,
        }
    }

    #[test]
    fn finite_rate_edge_cases() {
        let opts = SecurityOptions::default();
        let all = key_rate_finite(&inputs(1000, 1000, 1e-10), &opts).unwrap();
        assert_eq!(all.key_rate, 0.0);
        assert_eq!(all.zero_reason, Some(ZeroReason::NoKeyStates));
        let none = key_rate_finite(&inputs(0, 1000, 1e-10), &opts).unwrap();
        assert_eq!(none.zero_reason, Some(ZeroReason::NoEstimation));
        let mut wrong = inputs(10, 1000, 1e-10);
        wrong.estimator = EstimatorKind::NoiseMmKey;
        assert!(key_rate_finite(&wrong, &opts).is_err());
    }

    #[test]
    fn finite_rate_tends_to_scaled_asymptotic() {
        let asym = key_rate_asymptotic(3.0, 0.3, 0.01, 0.95).unwrap().raw;
        let n_total = 10usize.pow(16);
        let m = n_total / 4;
        for convention in [QuantileConvention::Erf, QuantileConvention::Gaussian] {
            let opts = SecurityOptions { convention, ..Default::default() };
            for kind in KEY_RATE_ESTIMATORS {
                let mut p = inputs(m, n_total, 1.0 - 1e-9);
                p.estimator = kind;
                let r = key_rate_finite(&p, &opts).unwrap();
                assert!(close(r.key_rate_raw, 0.75 * asym, 1e-6), "{kind}: {} vs {}", r.key_rate_raw, 0.75 * asym);
            }
        }
    }
}
