//! Small statistical helpers shared by the samplers and the harness.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// A Monte-Carlo estimate with its standard error and effective sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub ess: f64,
}

impl Estimate {
    /// Number of standard errors separating the estimate from `target`.
    pub fn z_against(&self, target: f64) -> f64 {
        (self.estimate - target) / self.stderr
    }

    pub fn covers(&self, target: f64, multiple: f64) -> bool {
        (self.estimate - target).abs() <= multiple * self.stderr
    }
}

/// Plain sample mean with `s / √M`.
pub fn mean_estimate(values: &[f64]) -> Estimate {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    Estimate { estimate: mean, stderr: (var / m).sqrt(), ess: m }
}

/// Running sums for a plain mean, mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanAccumulator {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(mut self, other: MeanAccumulator) -> Self {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn estimate(&self) -> Estimate {
        let m = self.count as f64;
        let mean = self.sum / m;
        let var = ((self.sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
        Estimate { estimate: mean, stderr: (var / m).sqrt(), ess: m }
    }
}

/// Self-normalized weighted mean with the delta-method standard error
/// `SE² = Σ w_i² (x_i − x̄)² / (Σ w_i)²` and Kish effective sample size.
pub fn weighted_estimate(values: &[f64], weights: &[f64]) -> Estimate {
    debug_assert_eq!(values.len(), weights.len());
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let var = values.iter().zip(weights).map(|(v, w)| (w * (v - mean)).powi(2)).sum::<f64>() / (total * total);
    Estimate { estimate: mean, stderr: var.sqrt(), ess: effective_sample_size(weights) }
}

pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let squares: f64 = weights.iter().map(|w| w * w).sum();
    if squares == 0.0 {
        0.0
    } else {
        total * total / squares
    }
}

/// Ordinary least squares `y ≈ slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit { slope, intercept: my - slope * mx, r_squared }
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).slope
}

/// Upper tail `P(Z > z)` of the standard normal.
pub fn normal_upper_tail(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    1.0 - normal.cdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_weights_reduce_to_plain_mean() {
        let values = [1.0, 2.0, 4.0, 7.0];
        let plain = mean_estimate(&values);
        let weighted = weighted_estimate(&values, &[1.0; 4]);
        assert_relative_eq!(plain.estimate, weighted.estimate);
        assert_relative_eq!(weighted.ess, 4.0);
        // Delta-method SE uses the biased variance.
        assert_relative_eq!(weighted.stderr * (4.0f64 / 3.0).sqrt(), plain.stderr, max_relative = 1e-12);
    }

    #[test]
    fn accumulator_matches_slice() {
        let values: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let mut a = MeanAccumulator::default();
        let mut b = MeanAccumulator::default();
        values[..40].iter().for_each(|&v| a.push(v));
        values[40..].iter().for_each(|&v| b.push(v));
        let merged = a.merge(b).estimate();
        let direct = mean_estimate(&values);
        assert_relative_eq!(merged.estimate, direct.estimate, max_relative = 1e-12);
        assert_relative_eq!(merged.stderr, direct.stderr, max_relative = 1e-9);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 1.0).collect();
        let fit = linear_fit(&x, &y);
        assert_relative_eq!(fit.slope, -2.0, max_relative = 1e-12);
        assert_relative_eq!(fit.intercept, 1.0, max_relative = 1e-12);
        assert_relative_eq!(log_log_slope(&[1.0, 2.0, 4.0], &[3.0, 12.0, 48.0]), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn ess_bounds() {
        assert_relative_eq!(effective_sample_size(&[0.0, 0.0, 5.0]), 1.0);
        assert!(effective_sample_size(&[0.3, 0.1, 0.9, 0.2]) <= 4.0);
        assert_relative_eq!(normal_upper_tail(0.0), 0.5, max_relative = 1e-12);
    }
}
