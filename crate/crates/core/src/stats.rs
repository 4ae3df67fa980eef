//! Small statistics toolkit for the ensemble summaries and acceptance
//! checks.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n(t) - F(t)|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i as f64 + 1.0) / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value of the one-sample KS statistic at level
/// `alpha`: `sqrt(-ln(alpha / 2) / 2) / sqrt(n)`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Asymptotic p-value `Q_KS(sqrt(n) D)` from the Kolmogorov series.
pub fn ks_p_value(n: usize, statistic: f64) -> f64 {
    let lambda = (n as f64).sqrt() * statistic;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = 2.0 * (-1.0f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub n: usize,
}

impl KsResult {
    pub fn new(samples: &[f64], cdf: impl Fn(f64) -> f64, alpha: f64) -> Self {
        let statistic = ks_statistic(samples, cdf);
        Self {
            statistic,
            critical_value: ks_critical_value(samples.len(), alpha),
            p_value: ks_p_value(samples.len(), statistic),
            n: samples.len(),
        }
    }

    pub fn passes(&self) -> bool {
        self.statistic < self.critical_value
    }
}

/// Linear-interpolated quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Mean with a normal-approximation 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, lo: f64::NAN, hi: f64::NAN, n };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let half = if n > 1 {
            let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            Z95 * (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, lo: mean - half, hi: mean + half, n }
    }
}

/// Standard error of a binomial fraction `p` over `n` trials.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&samples, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn critical_value_one_percent() {
        assert!((ks_critical_value(1, 0.01) - 1.627_624).abs() < 1e-6);
        assert!((ks_p_value(1, 1.627_624) - 0.01).abs() < 1e-6);
    }

    #[test]
    fn quantiles() {
        let d = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&d, 0.5), 3.0);
        assert_eq!(quantile_sorted(&d, 0.0), 1.0);
        assert_eq!(quantile_sorted(&d, 0.25), 2.0);
    }

    #[test]
    fn mean_ci_contains_mean() {
        let ci = MeanCi::from_samples(&[1.0, 2.0, 3.0]);
        assert_eq!(ci.mean, 2.0);
        assert!(ci.lo < 2.0 && ci.hi > 2.0);
    }
}
