//! First-order (delta-method) propagation of moment-statistic covariances
//! into estimator variances.
//!
//! For an estimator `theta(J)` of a statistics vector `J` with mean `mu` and
//! covariance `C_J`, `Var(theta) ~ g' C_J g` with `g` the gradient of
//! `theta` at `mu`, and `E(theta) ~ theta(mu)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{degenerate, domain, Error, Result};

/// Absolute PSD tolerance, scaled by the largest diagonal entry when that exceeds one.
pub const PSD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Statistic {
    /// `sigma_A^2`, full set.
    Sigma2A,
    /// `sigma_B^2`, full set.
    Sigma2B,
    /// `sigma_A'B'`, revealed subset.
    SigmaApBp,
    /// `sigma_A'^2`, revealed subset.
    Sigma2Ap,
    /// `sigma_A''^2`, key subset.
    Sigma2App,
    /// `sigma_B''^2`, key subset.
    Sigma2Bpp,
}

/// Denominator of `Cov(sigma_A''^2, sigma_B''^2)`.
///
/// Both statistics are means over the `n` key states, which gives
/// `2 t^2 V_A^2 / n`; the alternative reproduces a printed variant with
/// the total count `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossDenominator {
    #[default]
    KeySubset,
    Total,
}

/// Symmetric PSD covariance over an ordered list of statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticsCovariance {
    order: Vec<Statistic>,
    matrix: DMatrix<f64>,
}

impl StatisticsCovariance {
    pub fn new(order: Vec<Statistic>, matrix: DMatrix<f64>) -> Result<Self> {
        let k = order.len();
        if matrix.nrows() != k || matrix.ncols() != k {
            return Err(domain!(
                "{}x{} matrix for {k} statistics",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        let scale = matrix.diagonal().iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
        let tol = PSD_TOLERANCE * scale;
        for i in 0..k {
            if !(matrix[(i, i)] >= -tol) {
                return Err(Error::Numerical(format!("negative variance for {:?}", order[i])));
            }
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > tol {
                    return Err(Error::Numerical("covariance matrix is not symmetric".into()));
                }
            }
        }
        let min_eig = SymmetricEigen::new(matrix.clone())
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if min_eig < -tol {
            return Err(Error::Numerical(format!(
                "covariance matrix is not PSD (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { order, matrix })
    }

    pub fn order(&self) -> &[Statistic] {
        &self.order
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    fn position(&self, s: Statistic) -> Option<usize> {
        self.order.iter().position(|&o| o == s)
    }

    /// Covariance of two statistics, `None` if either is not tracked.
    pub fn get(&self, a: Statistic, b: Statistic) -> Option<f64> {
        Some(self.matrix[(self.position(a)?, self.position(b)?)])
    }

    /// Sub-covariance over `keep`, in the order given.
    pub fn restrict(&self, keep: &[Statistic]) -> Result<Self> {
        let idx = keep
            .iter()
            .map(|&s| self.position(s).ok_or_else(|| domain!("{s:?} not in covariance")))
            .collect::<Result<Vec<_>>>()?;
        let matrix = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.matrix[(idx[i], idx[j])]);
        Ok(Self { order: keep.to_vec(), matrix })
    }
}

/// `g' C_J g`.
pub fn delta_method_variance(gradient: &[f64], cj: &StatisticsCovariance) -> Result<f64> {
    if gradient.len() != cj.dim() {
        return Err(domain!(
            "gradient has {} entries, covariance is {}-dimensional",
            gradient.len(),
            cj.dim()
        ));
    }
    let g = nalgebra::DVector::from_column_slice(gradient);
    Ok((g.transpose() * cj.matrix() * &g)[(0, 0)])
}

/// First-order mean `theta(mu)`.
pub fn delta_method_mean<F: Fn(&[f64]) -> f64>(theta: F, mu: &[f64]) -> f64 {
    theta(mu)
}

/// `J0 - (J3 / J2)^2 J1`-style estimator shared by the full-set and
/// key-subset method of moments: `theta(A, B, A', C) = B - (C / A')^2 A`.
pub fn mm_statistic(j: &[f64; 4]) -> f64 {
    let [a, b, ap, c] = *j;
    let t = c / ap;
    b - t * t * a
}

/// Gradient of [`mm_statistic`] with respect to `(A, B, A', C)`.
pub fn mm_gradient(j: &[f64; 4]) -> [f64; 4] {
    let [a, _b, ap, c] = *j;
    let t = c / ap;
    [-t * t, 1.0, 2.0 * t * t * a / ap, -2.0 * t * a / ap]
}

/// Same functional form over `(A'', B'', A', C)`.
pub fn mm_key_gradient(j: &[f64; 4]) -> [f64; 4] {
    mm_gradient(j)
}

/// Gradient of `B - (C / A')^2 V_A` with respect to `(B, A', C)`.
pub fn mm_known_va_gradient(j: &[f64; 3], v_a: f64) -> [f64; 3] {
    let [_b, ap, c] = *j;
    let t = c / ap;
    [1.0, 2.0 * t * t * v_a / ap, -2.0 * t * v_a / ap]
}

fn check_counts(m: usize, other: usize, what: &str) -> Result<()> {
    if m == 0 {
        return Err(degenerate!("C_J needs m >= 1 revealed states"));
    }
    if other == 0 {
        return Err(degenerate!("C_J needs {what} >= 1"));
    }
    Ok(())
}

/// Covariance of `(sigma_A^2, sigma_B^2, sigma_A'^2, sigma_A'B')` for the
/// full-set method of moments, with `sigma_A^2 = sigma_A'^2 = V_A` and
/// `sigma_B^2 = t^2 V_A + sigma^2`.
pub fn build_cj_mm(
    v_a: f64,
    t: f64,
    sigma2: f64,
    m: usize,
    n_total: usize,
) -> Result<StatisticsCovariance> {
    check_counts(m, n_total, "N")?;
    if m > n_total {
        return Err(domain!("m = {m} exceeds N = {n_total}"));
    }
    if !(v_a > 0.0) {
        return Err(domain!("V_A = {v_a} must be > 0"));
    }
    let (mf, nf) = (m as f64, n_total as f64);
    let va2 = v_a * v_a;
    let sb2 = t * t * v_a + sigma2;
    let t2 = t * t;

    let var_a = 2.0 * va2 / nf;
    let var_b = 2.0 * sb2 * sb2 / nf;
    let var_ap = 2.0 * va2 / mf;
    let var_c = (2.0 * t2 * va2 + sigma2 * v_a) / mf;
    let cov_a_b = 2.0 * t2 * va2 / nf;
    let cov_a_ap = 2.0 * va2 / nf;
    let cov_a_c = 2.0 * t * va2 / nf;
    let cov_ap_c = 2.0 * t * va2 / mf;
    let cov_b_ap = 2.0 * t2 * va2 / nf;
    let cov_b_c = 2.0 * t * (t2 * va2 + sigma2 * v_a) / nf;

    #[rustfmt::skip]
    let matrix = DMatrix::from_row_slice(4, 4, &[
        var_a,    cov_a_b,  cov_a_ap, cov_a_c,
        cov_a_b,  var_b,    cov_b_ap, cov_b_c,
        cov_a_ap, cov_b_ap, var_ap,   cov_ap_c,
        cov_a_c,  cov_b_c,  cov_ap_c, var_c,
    ]);
    StatisticsCovariance::new(
        vec![Statistic::Sigma2A, Statistic::Sigma2B, Statistic::Sigma2Ap, Statistic::SigmaApBp],
        matrix,
    )
}

/// Covariance of `(sigma_A''^2, sigma_B''^2, sigma_A'^2, sigma_A'B')` for
/// the key-subset method of moments. The revealed and key subsets are
/// disjoint, so every cross-subset covariance is zero.
pub fn build_cj_mm_key(
    v_a: f64,
    t: f64,
    sigma2: f64,
    m: usize,
    n: usize,
    cross: CrossDenominator,
) -> Result<StatisticsCovariance> {
    check_counts(m, n, "n")?;
    if !(v_a > 0.0) {
        return Err(domain!("V_A = {v_a} must be > 0"));
    }
    let (mf, nf) = (m as f64, n as f64);
    let va2 = v_a * v_a;
    let sb2 = t * t * v_a + sigma2;
    let t2 = t * t;
    let cross_den = match cross {
        CrossDenominator::KeySubset => nf,
        CrossDenominator::Total => (m + n) as f64,
    };

    let var_app = 2.0 * va2 / nf;
    let var_bpp = 2.0 * sb2 * sb2 / nf;
    let var_ap = 2.0 * va2 / mf;
    let var_c = (2.0 * t2 * va2 + sigma2 * v_a) / mf;
    let cov_app_bpp = 2.0 * t2 * va2 / cross_den;
    let cov_ap_c = 2.0 * t * va2 / mf;

    #[rustfmt::skip]
    let matrix = DMatrix::from_row_slice(4, 4, &[
        var_app,     cov_app_bpp, 0.0,      0.0,
        cov_app_bpp, var_bpp,     0.0,      0.0,
        0.0,         0.0,         var_ap,   cov_ap_c,
        0.0,         0.0,         cov_ap_c, var_c,
    ]);
    StatisticsCovariance::new(
        vec![Statistic::Sigma2App, Statistic::Sigma2Bpp, Statistic::Sigma2Ap, Statistic::SigmaApBp],
        matrix,
    )
}

/// The full-set covariance restricted to `(sigma_B^2, sigma_A'^2, sigma_A'B')`,
/// the statistics used when Alice's modulation variance is taken as known.
pub fn build_cj_mm_known_va(
    v_a: f64,
    t: f64,
    sigma2: f64,
    m: usize,
    n_total: usize,
) -> Result<StatisticsCovariance> {
    build_cj_mm(v_a, t, sigma2, m, n_total)?.restrict(&[
        Statistic::Sigma2B,
        Statistic::Sigma2Ap,
        Statistic::SigmaApBp,
    ])
}

fn mm_mean(v_a: f64, t: f64, sigma2: f64) -> [f64; 4] {
    [v_a, t * t * v_a + sigma2, v_a, t * v_a]
}

/// Delta-method variance of the full-set method-of-moments noise estimator.
pub fn var_mm_delta(v_a: f64, t: f64, sigma2: f64, m: usize, n_total: usize) -> Result<f64> {
    let cj = build_cj_mm(v_a, t, sigma2, m, n_total)?;
    delta_method_variance(&mm_gradient(&mm_mean(v_a, t, sigma2)), &cj)
}

/// Delta-method variance of the key-subset method-of-moments noise estimator.
pub fn var_mm_key_delta(
    v_a: f64,
    t: f64,
    sigma2: f64,
    m: usize,
    n: usize,
    cross: CrossDenominator,
) -> Result<f64> {
    let cj = build_cj_mm_key(v_a, t, sigma2, m, n, cross)?;
    delta_method_variance(&mm_key_gradient(&mm_mean(v_a, t, sigma2)), &cj)
}

/// Delta-method variance of `sigma_B^2 - t_hat^2 V_A`.
pub fn var_mm_known_va_delta(
    v_a: f64,
    t: f64,
    sigma2: f64,
    m: usize,
    n_total: usize,
) -> Result<f64> {
    let cj = build_cj_mm_known_va(v_a, t, sigma2, m, n_total)?;
    let mu = mm_mean(v_a, t, sigma2);
    delta_method_variance(&mm_known_va_gradient(&[mu[1], mu[2], mu[3]], v_a), &cj)
}
