//! Every estimator evaluated on one session.

use crate::channel_sim::{ChannelParams, SessionData, SessionSplit};
use crate::error::Result;

use super::theory::{theoretical_variance, DesignPoint, VarianceOptions};
use super::{
    combine_optimal, estimate_sigma2_mle, estimate_sigma2_mm, estimate_sigma2_mm_key,
    estimate_sigma2_mm_known_va, estimate_t_mle, estimate_t_second_mod, estimate_vxi_second_mod,
    Estimate, EstimatorKind, StatisticsVector,
};

/// Where the variances attached to each estimate (and hence the blend
/// weights of the optimal estimators) are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceEval {
    /// At the estimates themselves; the only option on real data.
    PlugIn,
    /// At the true channel, for validation runs.
    AtTruth(ChannelParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSuite {
    pub stats: StatisticsVector,
    pub t_mle: Estimate,
    pub sigma2_mle: Estimate,
    pub sigma2_mm_known_va: Estimate,
    pub sigma2_mm: Estimate,
    pub sigma2_mm_key: Estimate,
    pub sigma2_opt: Estimate,
    /// Weight of the MLE inside `sigma2_opt`.
    pub alpha_opt: f64,
    pub t_second_mod: Option<Estimate>,
    pub vxi_second_mod: Option<Estimate>,
    pub vxi_opt: Option<Estimate>,
}

impl EstimateSuite {
    pub fn get(&self, kind: EstimatorKind) -> Option<&Estimate> {
        use EstimatorKind::*;
        match kind {
            TransmissionMle => Some(&self.t_mle),
            NoiseMle => Some(&self.sigma2_mle),
            NoiseMmKnownVa => Some(&self.sigma2_mm_known_va),
            NoiseMm => Some(&self.sigma2_mm),
            NoiseMmKey => Some(&self.sigma2_mm_key),
            NoiseOpt => Some(&self.sigma2_opt),
            TransmissionSecondMod => self.t_second_mod.as_ref(),
            ExcessNoiseSecondMod => self.vxi_second_mod.as_ref(),
            ExcessNoiseOpt => self.vxi_opt.as_ref(),
        }
    }
}

/// Runs every estimator. The moment-based family uses `session` and
/// `split`; the second-modulation family uses `second_mod` when given,
/// otherwise `session` itself if it carries a second modulation.
///
/// The moment-based estimators treat any second modulation present in
/// `session` as channel noise, so validation runs pass a separate
/// second-modulation session.
pub fn estimate_suite(
    session: &SessionData,
    split: &SessionSplit,
    v_a: f64,
    second_mod: Option<(&SessionData, f64)>,
    eval: VarianceEval,
    options: &VarianceOptions,
) -> Result<EstimateSuite> {
    let stats = StatisticsVector::from_session(session, split)?;
    let (x_pe, y_pe) = session.subset(&split.pe_indices);
    let t_mle = estimate_t_mle(&x_pe, &y_pe)?;
    let t_hat = t_mle.value;
    let sigma2_mle = estimate_sigma2_mle(&x_pe, &y_pe, t_hat)?;
    let sigma2_mm_known_va =
        estimate_sigma2_mm_known_va(stats.sigma2_b, t_hat, v_a, stats.m, stats.total())?;
    let sigma2_mm = estimate_sigma2_mm(&stats)?;
    let sigma2_mm_key = estimate_sigma2_mm_key(&stats, t_hat, options)?;

    let second = match second_mod {
        Some((s, v_m2)) => s.x_m2.as_ref().map(|x| (x, &s.y, v_m2)),
        None => None,
    };
    let (t_second_mod, vxi_second_mod) = match second {
        Some((x_m2, y, v_m2)) => {
            let t = estimate_t_second_mod(x_m2, y, v_m2)?;
            let v = estimate_vxi_second_mod(x_m2, y, &t, v_a)?;
            (Some(t), Some(v))
        }
        None => (None, None),
    };

    let mut suite = EstimateSuite {
        stats,
        t_mle,
        sigma2_mle,
        sigma2_mm_known_va,
        sigma2_mm,
        sigma2_mm_key,
        sigma2_opt: sigma2_mle,
        alpha_opt: 1.0,
        t_second_mod,
        vxi_second_mod,
        vxi_opt: None,
    };

    if let VarianceEval::AtTruth(channel) = eval {
        let point = DesignPoint {
            v_a,
            transmission: channel.transmission(),
            xi: channel.excess_noise(),
            m: stats.m,
            n_total: stats.total(),
            v_m2: second_mod.map_or(0.0, |(_, v)| v),
        };
        for est in [
            &mut suite.t_mle,
            &mut suite.sigma2_mle,
            &mut suite.sigma2_mm_known_va,
            &mut suite.sigma2_mm,
            &mut suite.sigma2_mm_key,
        ] {
            est.variance = theoretical_variance(est.kind, &point, options)?;
        }
        for est in [&mut suite.t_second_mod, &mut suite.vxi_second_mod].into_iter().flatten() {
            est.variance = theoretical_variance(est.kind, &point, options)?;
        }
    }

    let opt = combine_optimal(&suite.sigma2_mle, &suite.sigma2_mm_key)?;
    suite.alpha_opt = opt.alpha;
    suite.sigma2_opt = opt.into_estimate(EstimatorKind::NoiseOpt)?;

    if let Some(vxi) = suite.vxi_second_mod {
        let from_mle = Estimate::new(
            EstimatorKind::NoiseMle,
            suite.sigma2_mle.value - 1.0,
            suite.sigma2_mle.variance,
        )?;
        suite.vxi_opt = Some(combine_optimal(&vxi, &from_mle)?.into_estimate(EstimatorKind::ExcessNoiseOpt)?);
    }
    Ok(suite)
}
