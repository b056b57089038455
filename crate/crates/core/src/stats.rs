//! Small statistical helpers with deterministic summation order.

use alloc::vec::Vec;

const LEAF: usize = 32;

/// Pairwise (tree) sum. The split points depend only on the length.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    pairwise_sum_map(v, |x| x)
}

/// Pairwise sum of `f(v[i])`.
pub fn pairwise_sum_map<F: Fn(f64) -> f64 + Copy>(v: &[f64], f: F) -> f64 {
    if v.len() <= LEAF {
        let mut s = 0.0;
        for &x in v {
            s += f(x);
        }
        return s;
    }
    let mid = v.len() / 2;
    pairwise_sum_map(&v[..mid], f) + pairwise_sum_map(&v[mid..], f)
}

pub fn mean(v: &[f64]) -> f64 {
    pairwise_sum(v) / v.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    pairwise_sum_map(v, |x| (x - m) * (x - m)) / (v.len() as f64 - 1.0)
}

/// Standard error of the mean.
pub fn std_error(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    libm::sqrt(variance(v) / v.len() as f64)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Kolmogorov-Smirnov distance between the sample and a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut s: Vec<f64> = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let c = cdf(x);
        d = d.max(c - i as f64 / n).max((i + 1) as f64 / n - c);
    }
    d
}

/// Least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit { slope, intercept: my - slope * mx, r_squared }
}

/// Power-law fit `error ~ C * abscissa^slope` in log-log coordinates.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateFit {
    pub abscissae: Vec<f64>,
    pub errors: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl RateFit {
    pub fn new(abscissae: Vec<f64>, errors: Vec<f64>, stderrs: Vec<f64>) -> Self {
        let lx: Vec<f64> = abscissae.iter().map(|&a| libm::log(a)).collect();
        let ly: Vec<f64> = errors.iter().map(|&e| libm::log(e)).collect();
        let f = linear_fit(&lx, &ly);
        RateFit {
            abscissae,
            errors,
            stderrs,
            slope: f.slope,
            intercept: f.intercept,
            r_squared: f.r_squared,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
    }

    #[test]
    fn fit_recovers_power_law() {
        let x = vec![1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|&a: &f64| 3.0 * a.powf(-0.5)).collect();
        let f = RateFit::new(x, y, vec![0.0; 4]);
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.96) - 0.975_002_104_851_780).abs() < 1e-12);
    }
}
