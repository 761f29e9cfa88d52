//! Order-stable accumulation used when aggregating Monte Carlo trials.

/// Neumaier-compensated sum. The result depends only on the order of the
/// input sequence, never on how it was produced.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean, unbiased sample standard deviation and standard error of the
/// mean for a set of trial outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl SampleSummary {
    pub fn from_slice(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self { count, mean: f64::NAN, std: f64::NAN };
        }
        let mean = compensated_sum(values.iter().copied()) / count as f64;
        let std = if count > 1 {
            let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
            (ss / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { count, mean, std }
    }

    pub fn standard_error(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

/// Pearson correlation of two equally long samples.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "correlation needs paired samples");
    let sa = SampleSummary::from_slice(a);
    let sb = SampleSummary::from_slice(b);
    let cov = compensated_sum(a.iter().zip(b).map(|(x, y)| (x - sa.mean) * (y - sb.mean)))
        / (a.len() - 1) as f64;
    cov / (sa.std * sb.std)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn summary_of_constant_sample() {
        let s = SampleSummary::from_slice(&[2.0; 10]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn correlation_of_linear_pair_is_one() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [3.0, 5.0, 7.0, 9.0];
        assert!((correlation(&a, &b) - 1.0).abs() < 1e-12);
    }
}
