//! Closed-form estimator variances evaluated at given parameter values.

use crate::channel_sim::{fiber_transmission, ChannelParams};
use crate::error::{domain, Result};

use super::delta::{var_mm_key_delta, CrossDenominator};
use super::{combine_values, EstimatorKind};

/// Which variance to report for the key-subset method of moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MmKeyVariance {
    /// Propagated through the delta-method engine from the key-subset `C_J`.
    #[default]
    Derived,
    /// `2 s^4/n + (1/m + 1/(s n)) 4 t^2 s V_A`, the printed closed form.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VarianceOptions {
    pub mm_key: MmKeyVariance,
    pub cross: CrossDenominator,
}

/// Parameters at which theoretical variances are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignPoint {
    pub v_a: f64,
    pub transmission: f64,
    pub xi: f64,
    pub m: usize,
    pub n_total: usize,
    /// Zero when no second modulation is used.
    pub v_m2: f64,
}

impl DesignPoint {
    pub fn at_distance(
        distance_km: f64,
        loss_db_per_km: f64,
        v_a: f64,
        xi: f64,
        m: usize,
        n_total: usize,
        v_m2: f64,
    ) -> Result<Self> {
        Ok(Self {
            v_a,
            transmission: fiber_transmission(distance_km, loss_db_per_km)?,
            xi,
            m,
            n_total,
            v_m2,
        })
    }

    pub fn sigma2(&self) -> f64 {
        1.0 + self.transmission * self.xi
    }

    pub fn amplitude(&self) -> f64 {
        self.transmission.sqrt()
    }

    pub fn key_states(&self) -> usize {
        self.n_total.saturating_sub(self.m)
    }

    pub fn channel(&self) -> Result<ChannelParams> {
        ChannelParams::new(self.transmission, self.xi)
    }

    fn validate(&self) -> Result<()> {
        if !(self.v_a > 0.0 && self.v_a.is_finite()) {
            return Err(domain!("V_A = {} must be > 0", self.v_a));
        }
        if !(0.0..=1.0).contains(&self.transmission) {
            return Err(domain!("T = {} not in [0, 1]", self.transmission));
        }
        if !(self.xi >= 0.0) {
            return Err(domain!("xi = {} must be >= 0", self.xi));
        }
        if self.m > self.n_total {
            return Err(domain!("m = {} exceeds N = {}", self.m, self.n_total));
        }
        Ok(())
    }
}

pub fn var_t_mle(sigma2: f64, m: usize, v_a: f64) -> f64 {
    sigma2 / (m as f64 * v_a)
}

/// Exact chi-square(m-1) variance of the residual noise MLE.
pub fn var_sigma2_mle(sigma2: f64, m: usize) -> f64 {
    let mf = m as f64;
    2.0 * sigma2 * sigma2 * (mf - 1.0) / (mf * mf)
}

pub fn var_sigma2_mm_known_va(v_a: f64, t: f64, sigma2: f64, m: usize, n_total: usize) -> f64 {
    let (mf, nf) = (m as f64, n_total as f64);
    let t2 = t * t;
    2.0 * sigma2 * sigma2 / nf
        + 2.0 * t2 * t2 * v_a * v_a / nf
        + (1.0 / mf - 1.0 / nf) * 4.0 * t2 * sigma2 * v_a
}

pub fn var_sigma2_mm(v_a: f64, t: f64, sigma2: f64, m: usize, n_total: usize) -> f64 {
    let (mf, nf) = (m as f64, n_total as f64);
    2.0 * sigma2 * sigma2 / nf + (1.0 / mf - 1.0 / nf) * 4.0 * t * t * sigma2 * v_a
}

/// `2 s^4/n + (1/m + 1/n) 4 t^2 s V_A`, the closed form of the engine result
/// with the key-subset cross-term denominator.
pub fn var_sigma2_mm_key_derived(v_a: f64, t: f64, sigma2: f64, m: usize, n: usize) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    2.0 * sigma2 * sigma2 / nf + (1.0 / mf + 1.0 / nf) * 4.0 * t * t * sigma2 * v_a
}

pub fn var_sigma2_mm_key_printed(v_a: f64, t: f64, sigma2: f64, m: usize, n: usize) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    2.0 * sigma2 * sigma2 / nf + (1.0 / mf + 1.0 / (sigma2 * nf)) * 4.0 * t * t * sigma2 * v_a
}

pub fn var_sigma2_mm_key(
    v_a: f64,
    t: f64,
    sigma2: f64,
    m: usize,
    n: usize,
    options: &VarianceOptions,
) -> Result<f64> {
    match options.mm_key {
        MmKeyVariance::Derived => var_mm_key_delta(v_a, t, sigma2, m, n, options.cross),
        MmKeyVariance::Printed => Ok(var_sigma2_mm_key_printed(v_a, t, sigma2, m, n)),
    }
}

pub fn var_sigma2_opt(var_mle: f64, var_mm_key: f64) -> Result<f64> {
    Ok(combine_values(0.0, var_mle, 0.0, var_mm_key)?.variance)
}

/// `(4/N) T^2 (2 + V_N / (T V_M2))`, written so that `T = 0` is finite.
pub fn var_t_second_mod(transmission: f64, v_n: f64, v_m2: f64, n_total: usize) -> f64 {
    4.0 / n_total as f64 * (2.0 * transmission * transmission + transmission * v_n / v_m2)
}

pub fn var_vxi_second_mod(v_n: f64, v_a: f64, var_t: f64, n_total: usize) -> f64 {
    2.0 * v_n * v_n / n_total as f64 + v_a * v_a * var_t
}

pub fn var_vxi_opt(var_vxi: f64, var_mle: f64) -> Result<f64> {
    Ok(combine_values(0.0, var_vxi, 0.0, var_mle)?.variance)
}

fn need(cond: bool, kind: EstimatorKind, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(domain!("{kind} needs {what}"))
    }
}

/// Closed-form variance of an estimator at the given true parameters.
pub fn theoretical_variance(
    kind: EstimatorKind,
    p: &DesignPoint,
    options: &VarianceOptions,
) -> Result<f64> {
    use EstimatorKind::*;
    p.validate()?;
    let s = p.sigma2();
    let t = p.amplitude();
    let n = p.key_states();
    let v_n = 1.0 + p.transmission * p.xi + p.transmission * p.v_a;
    let second_mod = |k| -> Result<(f64, f64)> {
        need(p.v_m2 > 0.0, k, "a second modulation (V_M2 > 0)")?;
        need(p.n_total >= 1, k, "N >= 1")?;
        let var_t = var_t_second_mod(p.transmission, v_n, p.v_m2, p.n_total);
        Ok((var_t, var_vxi_second_mod(v_n, p.v_a, var_t, p.n_total)))
    };
    match kind {
        TransmissionMle => {
            need(p.m >= 1, kind, "m >= 1")?;
            Ok(var_t_mle(s, p.m, p.v_a))
        }
        NoiseMle => {
            need(p.m >= 2, kind, "m >= 2")?;
            Ok(var_sigma2_mle(s, p.m))
        }
        NoiseMmKnownVa => {
            need(p.m >= 1, kind, "m >= 1")?;
            Ok(var_sigma2_mm_known_va(p.v_a, t, s, p.m, p.n_total))
        }
        NoiseMm => {
            need(p.m >= 1, kind, "m >= 1")?;
            Ok(var_sigma2_mm(p.v_a, t, s, p.m, p.n_total))
        }
        NoiseMmKey => {
            need(p.m >= 1 && n >= 1, kind, "m >= 1 and n >= 1")?;
            var_sigma2_mm_key(p.v_a, t, s, p.m, n, options)
        }
        NoiseOpt => {
            need(p.m >= 2 && n >= 1, kind, "m >= 2 and n >= 1")?;
            var_sigma2_opt(
                var_sigma2_mle(s, p.m),
                var_sigma2_mm_key(p.v_a, t, s, p.m, n, options)?,
            )
        }
        TransmissionSecondMod => Ok(second_mod(kind)?.0),
        ExcessNoiseSecondMod => Ok(second_mod(kind)?.1),
        ExcessNoiseOpt => {
            need(p.m >= 2, kind, "m >= 2")?;
            var_vxi_opt(second_mod(kind)?.1, var_sigma2_mle(s, p.m))
        }
    }
}

pub fn theoretical_std(kind: EstimatorKind, p: &DesignPoint, options: &VarianceOptions) -> Result<f64> {
    theoretical_variance(kind, p, options).map(f64::sqrt)
}
