use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{basis_density, complex_gaussian, sample_gaussian_with, ModelParams, RngStream};
use crate::stats::{linear_fit, Estimate, MeanAccumulator};
use crate::torus::{bracket, sigma, sobolev_norm, to_grid, Cutoff, SpectralField};
use crate::{Error, Result};

const BLOCK: u64 = 4096;

/// Closed form `E_μ[e^{pβ|Π_N u(x)|²}] = (1 − pβσ_{α,N})^{-1}`.
///
/// `Π_N u(x)` is a circularly symmetric complex Gaussian with variance
/// `σ_{α,N}`, so `|Π_N u(x)|²` is exponential with mean `σ_{α,N}`.
pub fn exp_moment_oracle(params: &ModelParams, p: f64) -> Result<f64> {
    let s = sigma(params.alpha, Cutoff::Finite(params.cutoff), params.dim())?;
    let level = p * params.beta * s;
    if level >= 1.0 - 1e-12 {
        return Err(Error::NonIntegrable { level });
    }
    Ok(1.0 / (1.0 - level))
}

/// Monte-Carlo mean of `e^{pβ|Π_N u(x)|²}` over `samples` draws of `u ~ μ_α`.
///
/// Draws are organised in fixed blocks with one substream each, so the
/// result does not depend on the number of worker threads.
pub fn exp_moment_mc(params: &ModelParams, p: f64, x: [f64; 2], samples: u64, stream: &RngStream) -> Estimate {
    let limit = (params.cutoff * params.cutoff) as i64;
    let density = basis_density(params.dim()).sqrt();
    // Point-evaluation weights ⟨n⟩^{-α/2} φ_n(x), in the same slot order as `sample_gaussian_with`.
    let weights: Vec<Complex64> = params
        .geometry
        .norm_sq_table()
        .into_iter()
        .enumerate()
        .filter(|(_, nsq)| *nsq <= limit)
        .map(|(i, nsq)| {
            let n = params.geometry.frequency(i);
            let phase = n[0] as f64 * x[0] + n[1] as f64 * x[1];
            Complex64::from_polar(density * bracket(nsq).powf(-params.alpha / 2.0), phase)
        })
        .collect();
    let c = p * params.beta;
    let blocks = samples.div_ceil(BLOCK);
    let acc = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.substream(b).rng();
            let count = BLOCK.min(samples - b * BLOCK);
            let mut acc = MeanAccumulator::default();
            for _ in 0..count {
                let value: Complex64 = weights.iter().map(|w| complex_gaussian(&mut rng) * w).sum();
                acc.push((c * value.norm_sqr()).exp());
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(MeanAccumulator::default(), MeanAccumulator::merge);
    acc.estimate()
}

/// Which norm the tail experiment measures: `‖⟨∇⟩^s P u‖_{L^r}`, with `P`
/// either the identity or a frequency band `Π_{≤N₂} Π_{>N₁}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub s: f64,
    pub r: f64,
    pub band: Option<(usize, usize)>,
}

impl NormSpec {
    pub fn sobolev(s: f64) -> Self {
        Self { s, r: 2.0, band: None }
    }

    pub fn evaluate(&self, u: &SpectralField) -> f64 {
        let mut field = u.clone();
        let table = u.geometry().norm_sq_table();
        for (a, nsq) in field.coeffs_mut().iter_mut().zip(&table) {
            let inside = match self.band {
                Some((lo, hi)) => *nsq > (lo * lo) as i64 && *nsq <= (hi * hi) as i64,
                None => true,
            };
            if !inside {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        if self.r == 2.0 {
            return sobolev_norm(&field, self.s);
        }
        for (a, nsq) in field.coeffs_mut().iter_mut().zip(&table) {
            *a *= (1.0 + *nsq as f64).powf(self.s / 2.0);
        }
        let grid = to_grid(&field);
        let cell = u.geometry().cell_volume();
        if self.r.is_infinite() {
            grid.values().iter().map(|v| v.norm()).fold(0.0, f64::max)
        } else {
            (grid.values().iter().map(|v| v.norm().powf(self.r)).sum::<f64>() * cell).powf(1.0 / self.r)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFitConfig {
    pub norm: NormSpec,
    pub thresholds: Vec<f64>,
    pub samples: usize,
    /// Multiplies every draw (so the variance scales by `scale²`).
    pub scale: f64,
    /// Thresholds with fewer exceedances than this are left out of the fit.
    pub min_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Slope of `log P(‖u‖ > R)` against `R²`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub thresholds: Vec<f64>,
    pub exceedance: Vec<f64>,
}

/// Empirical Gaussian tail: least-squares fit of `log P(‖u‖ > R)` versus `R²`.
pub fn tail_fit(params: &ModelParams, config: &TailFitConfig, stream: &RngStream) -> Result<TailFit> {
    let d = params.dim() as f64;
    if params.alpha - 2.0 * config.norm.s <= d {
        return Err(Error::InvalidParameter(format!(
            "alpha - 2s = {} must exceed d for a finite variance",
            params.alpha - 2.0 * config.norm.s
        )));
    }
    if let Some((lo, hi)) = config.norm.band {
        if lo >= hi {
            return Err(Error::Degenerate(format!("empty band ({lo}, {hi}]: every norm vanishes")));
        }
    }
    let norms: Vec<f64> = (0..config.samples as u64)
        .into_par_iter()
        .map(|i| {
            let u = sample_gaussian_with(params, &mut stream.substream(i).rng());
            config.scale * config.norm.evaluate(&u)
        })
        .collect();
    if norms.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("all sampled norms vanish".into()));
    }
    let m = norms.len() as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut thresholds = Vec::new();
    let mut exceedance = Vec::new();
    for &r in &config.thresholds {
        let count = norms.iter().filter(|v| **v > r).count();
        if count >= config.min_count.max(1) {
            thresholds.push(r);
            exceedance.push(count as f64 / m);
            xs.push(r * r);
            ys.push((count as f64 / m).ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::Degenerate("fewer than two usable thresholds".into()));
    }
    let fit = linear_fit(&xs, &ys);
    Ok(TailFit { slope: fit.slope, intercept: fit.intercept, r_squared: fit.r_squared, thresholds, exceedance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusGeometry;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn params(alpha: f64, beta: f64, cutoff: usize) -> ModelParams {
        ModelParams::new(alpha, beta, 1.0, cutoff, TorusGeometry::new(1, cutoff.max(1), 2.0).unwrap()).unwrap()
    }

    #[test]
    fn oracle_examples() {
        let p = params(2.0, 1.0, 1);
        assert_relative_eq!(exp_moment_oracle(&p, 1.0).unwrap(), 1.0 / (1.0 - 1.0 / PI), max_relative = 1e-14);
        assert_relative_eq!(exp_moment_oracle(&p, 1.0).unwrap(), 1.46695, max_relative = 1e-5);
        assert_eq!(exp_moment_oracle(&p, 0.0).unwrap(), 1.0);
        let s = sigma(2.0, Cutoff::Finite(1), 1).unwrap();
        let near = exp_moment_oracle(&p.with_beta(0.999 / s), 1.0).unwrap();
        assert_relative_eq!(near, 1000.0, max_relative = 1e-9);
        assert!(matches!(exp_moment_oracle(&p.with_beta(1.0 / s), 1.0), Err(Error::NonIntegrable { .. })));
    }

    #[test]
    fn mc_matches_oracle_small_example() {
        let p = params(2.0, 1.0, 1);
        let est = exp_moment_mc(&p, 1.0, [0.3, 0.0], 100_000, &RngStream::new(42, 0));
        let exact = exp_moment_oracle(&p, 1.0).unwrap();
        assert!(est.covers(exact, 3.0), "{est:?} vs {exact}");
    }

    #[test]
    fn mc_point_value_agrees_with_field_sampling() {
        // The block sampler must produce exactly what sampling a field and evaluating it gives.
        let p = params(2.5, 0.2, 4);
        let x = [1.1, 0.0];
        let stream = RngStream::new(9, 4);
        let fast = exp_moment_mc(&p, 1.0, x, 10, &stream);
        let mut rng = stream.substream(0).rng();
        let mut acc = MeanAccumulator::default();
        for _ in 0..10 {
            let u = sample_gaussian_with(&p, &mut rng);
            acc.push((0.2 * u.eval(x).norm_sqr()).exp());
        }
        assert_relative_eq!(fast.estimate, acc.estimate().estimate, max_relative = 1e-12);
    }

    #[test]
    fn tail_slope_negative_and_scales() {
        let p = params(2.0, 1.0, 16);
        let config = TailFitConfig {
            norm: NormSpec::sobolev(0.0),
            thresholds: (0..12).map(|k| 1.5 + 0.25 * k as f64).collect(),
            samples: 40_000,
            scale: 1.0,
            min_count: 20,
        };
        let base = tail_fit(&p, &config, &RngStream::new(3, 0)).unwrap();
        assert!(base.slope < 0.0);
        let scaled_thresholds = config.thresholds.iter().map(|r| r * 2f64.sqrt()).collect();
        let doubled = tail_fit(
            &p,
            &TailFitConfig { scale: 2f64.sqrt(), thresholds: scaled_thresholds, ..config.clone() },
            &RngStream::new(3, 0),
        )
        .unwrap();
        assert_relative_eq!(doubled.slope, base.slope / 2.0, max_relative = 1e-9);
        // Fresh draws on the unscaled grid: halving holds approximately.
        let fresh =
            tail_fit(&p, &TailFitConfig { scale: 2f64.sqrt(), ..config.clone() }, &RngStream::new(4, 0)).unwrap();
        let ratio = fresh.slope / base.slope;
        assert!((0.35..0.65).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn tail_fit_degenerate_band() {
        let p = params(2.0, 1.0, 16);
        let config = TailFitConfig {
            norm: NormSpec { s: 0.0, r: 2.0, band: Some((8, 8)) },
            thresholds: vec![0.1, 0.2],
            samples: 100,
            scale: 1.0,
            min_count: 1,
        };
        assert!(matches!(tail_fit(&p, &config, &RngStream::new(1, 0)), Err(Error::Degenerate(_))));
        let bad = TailFitConfig { norm: NormSpec::sobolev(0.6), ..config };
        assert!(matches!(tail_fit(&p, &bad, &RngStream::new(1, 0)), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn lebesgue_norms() {
        let g = TorusGeometry::new(1, 4, 4.0).unwrap();
        let u = SpectralField::from_modes(g, [([1, 0], Complex64::new(1.0, 0.0))]).unwrap();
        // |u| ≡ (2π)^{-1/2}: L^4 norm = (2π)^{-1/2} (2π)^{1/4}, L^∞ norm = (2π)^{-1/2}.
        let l4 = NormSpec { s: 0.0, r: 4.0, band: None }.evaluate(&u);
        assert_relative_eq!(l4, (2.0 * PI).powf(-0.25), max_relative = 1e-12);
        let linf = NormSpec { s: 0.0, r: f64::INFINITY, band: None }.evaluate(&u);
        assert_relative_eq!(linf, (2.0 * PI).powf(-0.5), max_relative = 1e-12);
        let h1 = NormSpec { s: 1.0, r: 4.0, band: None }.evaluate(&u);
        assert_relative_eq!(h1, 2f64.sqrt() * l4, max_relative = 1e-12);
    }
}
