//! Maximisation of the finite-size key rate over the modulation variance
//! and the revealed fraction, and the maximum secure distance.
//!
//! The search is a coarse grid in `(ln V_A, logit(m/N))` followed by a
//! bounded Nelder-Mead refinement started from the best grid cell.
//!
//! The search does not maximise the clamped rate, which is flat at zero
//! outside the secure region. Where the rate is positive it maximises the
//! rate; elsewhere it maximises the unscaled bracket `beta I - S`. Scaling a
//! negative bracket by `n/N` would reward `m/N -> 1` and steer the simplex
//! away from small secure islands at long range.

use crate::channel_sim::fiber_transmission;
use crate::error::{domain, Result};
use crate::estimators::EstimatorKind;
use crate::par;
use crate::security::{
    key_rate_asymptotic, key_rate_finite, FiniteKeyInputs, KeyRateResult, SecurityOptions,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub v_a_min: f64,
    pub v_a_max: f64,
    pub m_fraction_min: f64,
    pub m_fraction_max: f64,
    pub grid_v_a: usize,
    pub grid_fraction: usize,
    pub max_iterations: usize,
    /// Simplex diameter, in transformed coordinates, at which refinement stops.
    pub tolerance: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            v_a_min: 0.1,
            v_a_max: 100.0,
            m_fraction_min: 1e-3,
            m_fraction_max: 1.0 - 1e-3,
            grid_v_a: 24,
            grid_fraction: 24,
            max_iterations: 400,
            tolerance: 1e-7,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_a_min > 0.0 && self.v_a_min <= self.v_a_max && self.v_a_max.is_finite()) {
            return Err(domain!("empty V_A range [{}, {}]", self.v_a_min, self.v_a_max));
        }
        if !(self.m_fraction_min > 0.0
            && self.m_fraction_min <= self.m_fraction_max
            && self.m_fraction_max < 1.0)
        {
            return Err(domain!(
                "m/N range [{}, {}] must lie inside (0, 1) and be non-empty",
                self.m_fraction_min,
                self.m_fraction_max
            ));
        }
        if self.grid_v_a == 0 || self.grid_fraction == 0 {
            return Err(domain!("grid sizes must be >= 1"));
        }
        Ok(())
    }
}

/// Channel and protocol settings that stay fixed during a search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTarget {
    pub transmission: f64,
    pub xi: f64,
    pub beta: f64,
    pub n_total: usize,
    pub epsilon_pe: f64,
    pub estimator: EstimatorKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub v_a: f64,
    pub m_fraction: f64,
    pub key_rate_raw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best_v_a: f64,
    pub best_m_fraction: f64,
    pub best_m: usize,
    /// Clamped at zero.
    pub best_key_rate: f64,
    pub best_key_rate_raw: f64,
    pub evaluations: usize,
    pub grid_best: TracePoint,
    /// Best vertex after each refinement iteration.
    pub trace: Vec<TracePoint>,
}

/// Revealed count for a continuous fraction: nearest integer, ties toward
/// revealing more.
pub fn revealed_count(fraction: f64, n_total: usize) -> usize {
    let m = (fraction * n_total as f64 + 0.5).floor();
    (m.max(0.0) as usize).min(n_total)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Raw finite-size key rate at `(V_A, m/N)`.
pub fn rate_at(target: &RateTarget, v_a: f64, fraction: f64, options: &SecurityOptions) -> Result<f64> {
    Ok(evaluate(target, v_a, fraction, options)?.key_rate_raw)
}

/// The quantity the search maximises: the raw rate where it is positive,
/// the bracket `beta I - S` where it is not, and `-inf` when there are too
/// few states to estimate or to distil. Continuous and sign-preserving.
pub fn search_objective(
    target: &RateTarget,
    v_a: f64,
    fraction: f64,
    options: &SecurityOptions,
) -> Result<f64> {
    let r = evaluate(target, v_a, fraction, options)?;
    Ok(match r.bracket() {
        Some(_) if r.key_rate_raw > 0.0 => r.key_rate_raw,
        Some(g) => g,
        None => f64::NEG_INFINITY,
    })
}

fn evaluate(
    target: &RateTarget,
    v_a: f64,
    fraction: f64,
    options: &SecurityOptions,
) -> Result<KeyRateResult> {
    let inputs = FiniteKeyInputs {
        v_a,
        transmission: target.transmission,
        xi: target.xi,
        beta: target.beta,
        n_total: target.n_total,
        m: revealed_count(fraction, target.n_total),
        epsilon_pe: target.epsilon_pe,
        estimator: target.estimator,
    };
    key_rate_finite(&inputs, options)
}

struct Box2 {
    lower: [f64; 2],
    upper: [f64; 2],
}

impl Box2 {
    fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0].clamp(self.lower[0], self.upper[0]),
            p[1].clamp(self.lower[1], self.upper[1]),
        ]
    }
}

/// Best vertex, its value, evaluation count and per-iteration best vertices.
type Simplex<const D: usize> = ([f64; D], f64, usize, Vec<[f64; D]>);

/// Bounded Nelder-Mead minimisation in `D` dimensions. Trial points are
/// projected onto the box. Returns the best vertex, its value, the
/// evaluation count and the per-iteration best vertices.
fn nelder_mead<const D: usize, F>(
    f: F,
    start: [f64; D],
    step: [f64; D],
    lower: [f64; D],
    upper: [f64; D],
    max_iterations: usize,
    tolerance: f64,
) -> Result<Simplex<D>>
where
    F: Fn(&[f64; D]) -> Result<f64>,
{
    let project = |p: [f64; D]| {
        let mut q = p;
        for k in 0..D {
            q[k] = q[k].clamp(lower[k], upper[k]);
        }
        q
    };
    let mut evals = 0usize;
    let mut eval = |p: &[f64; D]| -> Result<f64> {
        evals += 1;
        f(p)
    };

    let mut simplex: Vec<([f64; D], f64)> = Vec::with_capacity(D + 1);
    let s0 = project(start);
    simplex.push((s0, eval(&s0)?));
    for k in 0..D {
        let mut p = s0;
        p[k] += step[k];
        if p[k] > upper[k] {
            p[k] = s0[k] - step[k];
        }
        let p = project(p);
        simplex.push((p, eval(&p)?));
    }

    let mut trace = Vec::new();
    for _ in 0..max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(simplex[0].0);
        let diameter = simplex[1..]
            .iter()
            .map(|(p, _)| (0..D).map(|k| (p[k] - simplex[0].0[k]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < tolerance {
            break;
        }

        let mut centroid = [0.0; D];
        for (p, _) in &simplex[..D] {
            for k in 0..D {
                centroid[k] += p[k] / D as f64;
            }
        }
        let along = |coef: f64| {
            let worst = simplex[D].0;
            let mut q = [0.0; D];
            for k in 0..D {
                q[k] = centroid[k] + coef * (worst[k] - centroid[k]);
            }
            project(q)
        };

        let best_val = simplex[0].1;
        let second_worst = simplex[D - 1].1;
        let worst_val = simplex[D].1;

        let reflected = along(-1.0);
        let fr = eval(&reflected)?;
        if fr < best_val {
            let expanded = along(-2.0);
            let fe = eval(&expanded)?;
            simplex[D] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < second_worst {
            simplex[D] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < worst_val {
            let c = along(-0.5);
            (c, eval(&c)?)
        } else {
            let c = along(0.5);
            (c, eval(&c)?)
        };
        if fc < worst_val.min(fr) {
            simplex[D] = (contracted, fc);
            continue;
        }
        let best = simplex[0].0;
        for vertex in simplex.iter_mut().skip(1) {
            let mut q = [0.0; D];
            for k in 0..D {
                q[k] = best[k] + 0.5 * (vertex.0[k] - best[k]);
            }
            let q = project(q);
            *vertex = (q, eval(&q)?);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok((simplex[0].0, simplex[0].1, evals, trace))
}

/// Grid search plus simplex refinement. `extra_starts` are additional
/// `(V_A, m/N)` points the refinement is also started from; the best of all
/// runs is returned.
pub fn optimize_key_rate_from(
    target: &RateTarget,
    config: &SearchConfig,
    options: &SecurityOptions,
    extra_starts: &[(f64, f64)],
) -> Result<OptimizationResult> {
    config.validate()?;
    let bounds = Box2 {
        lower: [config.v_a_min.ln(), logit(config.m_fraction_min)],
        upper: [config.v_a_max.ln(), logit(config.m_fraction_max)],
    };
    let us = linspace(bounds.lower[0], bounds.upper[0], config.grid_v_a);
    let ws = linspace(bounds.lower[1], bounds.upper[1], config.grid_fraction);
    let cells: Vec<[f64; 2]> = us
        .iter()
        .flat_map(|&u| ws.iter().map(move |&w| [u, w]))
        .collect();
    let objective = |p: &[f64; 2]| search_objective(target, p[0].exp(), logistic(p[1]), options);

    let values = par::map_slice(&cells, objective)
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let mut best_idx = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best_idx] {
            best_idx = i;
        }
    }
    let grid_v_a = cells[best_idx][0].exp();
    let grid_fraction = logistic(cells[best_idx][1]);
    let grid_best = TracePoint {
        v_a: grid_v_a,
        m_fraction: grid_fraction,
        key_rate_raw: rate_at(target, grid_v_a, grid_fraction, options)?,
    };
    let mut evaluations = cells.len();

    let step = [
        if us.len() > 1 { us[1] - us[0] } else { 0.5 },
        if ws.len() > 1 { ws[1] - ws[0] } else { 0.5 },
    ];
    let mut starts = vec![cells[best_idx]];
    for &(v_a, frac) in extra_starts {
        starts.push(bounds.clamp([v_a.max(f64::MIN_POSITIVE).ln(), logit(frac.clamp(1e-300, 1.0 - 1e-16))]));
    }

    let mut best = (cells[best_idx], values[best_idx]);
    let mut trace = Vec::new();
    for start in starts {
        let (x, fx, evals, path) = nelder_mead(
            |p: &[f64; 2]| objective(p).map(|v| -v),
            start,
            step,
            bounds.lower,
            bounds.upper,
            config.max_iterations,
            config.tolerance,
        )?;
        evaluations += evals;
        trace.extend(path.into_iter().map(|p| TracePoint {
            v_a: p[0].exp(),
            m_fraction: logistic(p[1]),
            key_rate_raw: f64::NAN,
        }));
        if -fx > best.1 {
            best = (x, -fx);
        }
    }
    for tp in trace.iter_mut() {
        tp.key_rate_raw = rate_at(target, tp.v_a, tp.m_fraction, options)?;
    }

    let best_v_a = best.0[0].exp();
    let best_m_fraction = logistic(best.0[1]);
    let raw = rate_at(target, best_v_a, best_m_fraction, options)?;
    Ok(OptimizationResult {
        best_v_a,
        best_m_fraction,
        best_m: revealed_count(best_m_fraction, target.n_total),
        best_key_rate: raw.max(0.0),
        best_key_rate_raw: raw,
        evaluations,
        grid_best,
        trace,
    })
}

pub fn optimize_key_rate(
    target: &RateTarget,
    config: &SearchConfig,
    options: &SecurityOptions,
) -> Result<OptimizationResult> {
    optimize_key_rate_from(target, config, options, &[])
}

/// Optimises several estimators at one channel. The blended noise
/// estimator is never worse than the MLE at equal `(V_A, m/N)`, so its
/// refinement is also started from the optima of the other requested
/// estimators; this keeps its optimum at or above theirs.
pub fn optimize_estimators(
    base: &RateTarget,
    kinds: &[EstimatorKind],
    config: &SearchConfig,
    options: &SecurityOptions,
) -> Result<Vec<OptimizationResult>> {
    let mut results: Vec<Option<OptimizationResult>> = vec![None; kinds.len()];
    for (i, &kind) in kinds.iter().enumerate() {
        if kind != EstimatorKind::NoiseOpt {
            let target = RateTarget { estimator: kind, ..*base };
            results[i] = Some(optimize_key_rate(&target, config, options)?);
        }
    }
    let seeds: Vec<(f64, f64)> = results
        .iter()
        .flatten()
        .map(|r| (r.best_v_a, r.best_m_fraction))
        .collect();
    for (i, &kind) in kinds.iter().enumerate() {
        if kind == EstimatorKind::NoiseOpt {
            let target = RateTarget { estimator: kind, ..*base };
            results[i] = Some(optimize_key_rate_from(&target, config, options, &seeds)?);
        }
    }
    Ok(results.into_iter().map(|r| r.expect("every kind was optimised")).collect())
}

/// Asymptotic rate maximised over `V_A` alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticOptimum {
    pub best_v_a: f64,
    pub key_rate: f64,
    pub key_rate_raw: f64,
}

pub fn optimize_asymptotic(
    transmission: f64,
    xi: f64,
    beta: f64,
    config: &SearchConfig,
) -> Result<AsymptoticOptimum> {
    config.validate()?;
    let (lo, hi) = (config.v_a_min.ln(), config.v_a_max.ln());
    let f = |u: f64| key_rate_asymptotic(u.exp(), transmission, xi, beta).map(|r| r.raw);
    let us = linspace(lo, hi, config.grid_v_a.max(2) * 4);
    let values = us.iter().map(|&u| f(u)).collect::<Result<Vec<_>>>()?;
    let mut best_idx = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best_idx] {
            best_idx = i;
        }
    }
    let step = if us.len() > 1 { us[1] - us[0] } else { 0.5 };
    let (x, fx, _, _) = nelder_mead(
        |p: &[f64; 1]| f(p[0]).map(|v| -v),
        [us[best_idx]],
        [step],
        [lo],
        [hi],
        config.max_iterations,
        config.tolerance,
    )?;
    let (u, raw) = if -fx > values[best_idx] { (x[0], -fx) } else { (us[best_idx], values[best_idx]) };
    Ok(AsymptoticOptimum { best_v_a: u.exp(), key_rate: raw.max(0.0), key_rate_raw: raw })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxDistance {
    pub distance_km: f64,
    /// No positive key even at zero distance.
    pub no_key_at_origin: bool,
    /// The rate was still positive at [`DISTANCE_CAP_KM`]; the distance is a
    /// lower bound.
    pub reached_cap: bool,
}

/// Default width of the final bracket around the maximum distance.
pub const DISTANCE_RESOLUTION_KM: f64 = 1e-3;
const DISTANCE_BRACKET_STEP_KM: f64 = 25.0;
/// Beyond this range (T ~ 1e-10 at 0.2 dB/km) the rate sinks toward the
/// double-precision floor of `1 + T xi` and its sign stops being meaningful.
pub const DISTANCE_CAP_KM: f64 = 500.0;

/// Largest distance with a positive rate, to within `resolution_km`,
/// assuming the rate is non-increasing in distance. `rate(d)` returns the
/// raw optimised rate. The returned distance itself has a positive rate.
pub fn bisect_max_distance<F>(rate: F, resolution_km: f64) -> Result<MaxDistance>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(resolution_km > 0.0) {
        return Err(domain!("distance resolution {resolution_km} must be > 0"));
    }
    if rate(0.0)? <= 0.0 {
        return Ok(MaxDistance { distance_km: 0.0, no_key_at_origin: true, reached_cap: false });
    }
    let mut lo = 0.0;
    let mut hi = DISTANCE_BRACKET_STEP_KM;
    while rate(hi)? > 0.0 {
        lo = hi;
        hi += DISTANCE_BRACKET_STEP_KM;
        if hi > DISTANCE_CAP_KM {
            return Ok(MaxDistance { distance_km: lo, no_key_at_origin: false, reached_cap: true });
        }
    }
    while hi - lo > resolution_km {
        let mid = 0.5 * (lo + hi);
        if rate(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MaxDistance { distance_km: lo, no_key_at_origin: false, reached_cap: false })
}

/// Maximum distance with a positive optimised finite-size rate.
#[allow(clippy::too_many_arguments)]
pub fn maximum_distance(
    xi: f64,
    beta: f64,
    n_total: usize,
    epsilon_pe: f64,
    estimator: EstimatorKind,
    loss_db_per_km: f64,
    config: &SearchConfig,
    options: &SecurityOptions,
) -> Result<MaxDistance> {
    bisect_max_distance(|d| {
        let target = RateTarget {
            transmission: fiber_transmission(d, loss_db_per_km)?,
            xi,
            beta,
            n_total,
            epsilon_pe,
            estimator,
        };
        Ok(optimize_key_rate(&target, config, options)?.best_key_rate_raw)
    }, DISTANCE_RESOLUTION_KM)
}

/// Maximum distance of the asymptotic rate (the infinite-`N` limit).
pub fn maximum_distance_asymptotic(
    xi: f64,
    beta: f64,
    loss_db_per_km: f64,
    config: &SearchConfig,
) -> Result<MaxDistance> {
    bisect_max_distance(|d| {
        Ok(optimize_asymptotic(fiber_transmission(d, loss_db_per_km)?, xi, beta, config)?.key_rate_raw)
    }, DISTANCE_RESOLUTION_KM)
}
