//! Focusing non-normalizability experiments on the circle: bump fields, the
//! Ornstein–Uhlenbeck drift, the drifted objective and divergence scans.

mod bump;
mod scan;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::measures::{complex_gaussian, EnsembleReport, ModelParams, RngStream};
use crate::stats::{Estimate, MeanAccumulator};
use crate::torus::{bracket, sigma, Cutoff, FourierTransform, SpectralField};
use crate::{Error, Result};

pub use bump::{build_bump, bump_norm_scan, BumpField, BumpScan, BumpScanRow};
pub use scan::{divergence_scan, paired_trend_pvalue, DivergenceRow, DivergenceScan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeScheme {
    #[default]
    EulerMaruyama,
    /// Exact Gaussian transition of `(B_n, c B_n − Z_n)` over one step.
    ExactOu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalConfig {
    /// `params.cutoff` is the drift scale `N`; the geometry must hold `|n| ≤ 2N`.
    pub params: ModelParams,
    pub mass_cutoff: f64,
    pub clip: f64,
    pub eta: f64,
    /// SDE step; `None` selects [`default_sde_step`].
    pub sde_dt: Option<f64>,
    pub ensemble: usize,
    pub scheme: SdeScheme,
    pub bump_center: f64,
}

impl VariationalConfig {
    pub fn new(params: ModelParams, mass_cutoff: f64, clip: f64, eta: f64, ensemble: usize) -> Self {
        Self { params, mass_cutoff, clip, eta, sde_dt: None, ensemble, scheme: SdeScheme::default(), bump_center: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.params.dim() != 1 {
            return Err(Error::InvalidGeometry("variational experiments are one-dimensional".into()));
        }
        for (name, v) in [("K", self.mass_cutoff), ("L", self.clip)] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be >= 0, got {}", self.eta)));
        }
        if self.ensemble == 0 {
            return Err(Error::InvalidParameter("ensemble size must be positive".into()));
        }
        let limit = default_sde_step(self.params.alpha, self.params.cutoff);
        if let Some(dt) = self.sde_dt {
            let fastest = ou_rate(0, self.params.alpha, self.params.cutoff);
            if !(dt > 0.0) || fastest * dt > 0.1 + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "SDE step {dt} violates the stability rule max_n a_n dt <= 0.1 (default {limit})"
                )));
            }
        }
        Ok(())
    }

    pub fn sde_step(&self) -> f64 {
        self.sde_dt.unwrap_or_else(|| default_sde_step(self.params.alpha, self.params.cutoff))
    }
}

/// `a_n = ⟨n⟩^{-α/2} N^{α/2}`.
pub fn ou_rate(norm_sq: i64, alpha: f64, scale: usize) -> f64 {
    bracket(norm_sq).powf(-alpha / 2.0) * (scale as f64).powf(alpha / 2.0)
}

/// `min_n (10 a_n)^{-1}`, capped at `1e-3`.
pub fn default_sde_step(alpha: f64, scale: usize) -> f64 {
    (1.0 / (10.0 * ou_rate(0, alpha, scale))).min(1e-3)
}

/// Steps per unit time for a requested step, rounded up so that they land on `t = 1`.
fn step_count(dt: f64) -> (usize, f64) {
    let steps = (1.0 / dt - 1e-9).ceil().max(1.0) as usize;
    (steps, 1.0 / steps as f64)
}

/// One mode of the pair `(B_n, Z_{N,n})` driven by `dZ = a(c B − Z) dt`.
struct ModeStepper {
    c: f64,
    a: f64,
    dt: f64,
    scheme: SdeScheme,
    decay: f64,
    gain: f64,
    spread: f64,
}

impl ModeStepper {
    fn new(norm_sq: i64, alpha: f64, scale: usize, dt: f64, scheme: SdeScheme) -> Self {
        let c = bracket(norm_sq).powf(-alpha / 2.0);
        let a = ou_rate(norm_sq, alpha, scale);
        let decay = (-a * dt).exp();
        let cov = c * (1.0 - decay) / a;
        let var_i = c * c * (1.0 - decay * decay) / (2.0 * a);
        Self { c, a, dt, scheme, decay, gain: cov / dt, spread: (var_i - cov * cov / dt).max(0.0).sqrt() }
    }

    /// Advances `(b, z)` by one step and returns `ΔZ`.
    fn step<R: Rng + ?Sized>(&self, rng: &mut R, b: &mut Complex64, z: &mut Complex64) -> Complex64 {
        let db = complex_gaussian(rng) * self.dt.sqrt();
        let previous = *z;
        match self.scheme {
            SdeScheme::EulerMaruyama => {
                *z += (*b * self.c - *z) * (self.a * self.dt);
            }
            SdeScheme::ExactOu => {
                let innovation = db * self.gain + complex_gaussian(rng) * self.spread;
                let x = (*b * self.c - *z) * self.decay + innovation;
                *z = (*b + db) * self.c - x;
            }
        }
        *b += db;
        *z - previous
    }
}

/// Discretised `(B_n, Z_{N,n})` on a uniform grid of `[0, 1]` for `|n| ≤ N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftPath {
    pub dt: f64,
    /// Storage indices of the simulated modes.
    pub modes: Vec<usize>,
    pub brownian: Vec<Vec<Complex64>>,
    pub ou: Vec<Vec<Complex64>>,
}

impl DriftPath {
    /// `Y(1) = ⟨∇⟩^{-α/2} W(1)` restricted to the simulated modes.
    pub fn y_final(&self, params: &ModelParams) -> SpectralField {
        let table = params.geometry.norm_sq_table();
        let mut out = SpectralField::zeros(params.geometry);
        for (k, &i) in self.modes.iter().enumerate() {
            out.coeffs_mut()[i] =
                self.brownian[k].last().copied().unwrap_or_default() * bracket(table[i]).powf(-params.alpha / 2.0);
        }
        out
    }

    pub fn z_final(&self, params: &ModelParams) -> SpectralField {
        let mut out = SpectralField::zeros(params.geometry);
        for (k, &i) in self.modes.iter().enumerate() {
            out.coeffs_mut()[i] = self.ou[k].last().copied().unwrap_or_default();
        }
        out
    }
}

fn active_modes(params: &ModelParams) -> Vec<(usize, i64)> {
    let limit = (params.cutoff * params.cutoff) as i64;
    params.geometry.norm_sq_table().into_iter().enumerate().filter(|(_, nsq)| *nsq <= limit).collect()
}

/// Co-simulates `(B_n, Z_{N,n})` for all `|n| ≤ N`, mode by mode in storage order.
pub fn simulate_drift(config: &VariationalConfig, stream: &RngStream) -> Result<DriftPath> {
    config.validate()?;
    let p = &config.params;
    let (steps, dt) = step_count(config.sde_step());
    let mut rng = stream.rng();
    let mut modes = Vec::new();
    let mut brownian = Vec::new();
    let mut ou = Vec::new();
    for (i, nsq) in active_modes(p) {
        let stepper = ModeStepper::new(nsq, p.alpha, p.cutoff, dt, config.scheme);
        let (mut b, mut z) = (Complex64::default(), Complex64::default());
        let mut bs = Vec::with_capacity(steps + 1);
        let mut zs = Vec::with_capacity(steps + 1);
        bs.push(b);
        zs.push(z);
        for _ in 0..steps {
            stepper.step(&mut rng, &mut b, &mut z);
            bs.push(b);
            zs.push(z);
        }
        modes.push(i);
        brownian.push(bs);
        ou.push(zs);
    }
    Ok(DriftPath { dt, modes, brownian, ou })
}

/// `½ ∫_0^1 ‖⟨∇⟩^{α/2}(−∂_t Z_N + η f_N)‖² dt` with the forward difference of `Z`.
pub fn drift_cost(path: &DriftPath, config: &VariationalConfig, bump: &SpectralField) -> f64 {
    let p = &config.params;
    let table = p.geometry.norm_sq_table();
    let steps = path.ou.first().map_or(0, |z| z.len().saturating_sub(1));
    let mut total = 0.0;
    let mut covered = vec![false; table.len()];
    for (k, &i) in path.modes.iter().enumerate() {
        covered[i] = true;
        let weight = bracket(table[i]).powf(p.alpha);
        let f = bump.coeffs()[i] * config.eta;
        let z = &path.ou[k];
        let sum: f64 = (0..steps).map(|j| (f - (z[j + 1] - z[j]) / path.dt).norm_sqr()).sum();
        total += weight * sum * path.dt;
    }
    for (i, f) in bump.coeffs().iter().enumerate() {
        if !covered[i] {
            total += bracket(table[i]).powf(p.alpha) * (f * config.eta).norm_sqr();
        }
    }
    0.5 * total
}

/// Itô closed form of `E|Y(1,x) − Z_N(1,x)|²`:
/// `(2π)^{-1}[Σ_{|n|≤N} ⟨n⟩^{-α}(1 − e^{−2a_n})/(2a_n) + Σ_{|n|>N} ⟨n⟩^{-α}]`.
pub fn ou_discrepancy_oracle(alpha: f64, scale: usize) -> Result<f64> {
    let n = scale as i64;
    let inner: f64 = (-n..=n)
        .map(|k| {
            let nsq = k * k;
            let a = ou_rate(nsq, alpha, scale);
            bracket(nsq).powf(-alpha) * (1.0 - (-2.0 * a).exp()) / (2.0 * a)
        })
        .sum();
    let tail = sigma(alpha, Cutoff::Infinite, 1)? - sigma(alpha, Cutoff::Finite(scale), 1)?;
    Ok(inner / (2.0 * PI) + tail)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuCheck {
    pub estimate: Estimate,
    pub oracle: f64,
    /// Modes `|n| ≤ tail_modes` are sampled; the rest is added analytically.
    pub tail_modes: usize,
}

/// Monte-Carlo estimate of `E|Y(1,x) − Z_N(1,x)|²` against its closed form.
///
/// Modes `N < |n| ≤ tail_modes` contribute `Y_n(1)` sampled exactly; beyond
/// that the deterministic remainder of the series is added.
pub fn ou_discrepancy_check(
    config: &VariationalConfig,
    x: f64,
    tail_modes: usize,
    stream: &RngStream,
) -> Result<OuCheck> {
    config.validate()?;
    let p = config.params;
    let scale = p.cutoff;
    let tail_modes = tail_modes.max(scale);
    let (steps, dt) = step_count(config.sde_step());
    let basis = (2.0 * PI).powf(-0.5);
    let inner: Vec<(ModeStepper, Complex64)> = (-(scale as i64)..=scale as i64)
        .map(|k| {
            (ModeStepper::new(k * k, p.alpha, scale, dt, config.scheme), Complex64::from_polar(basis, k as f64 * x))
        })
        .collect();
    let outer: Vec<Complex64> = ((scale as i64 + 1)..=tail_modes as i64)
        .flat_map(|k| [k, -k])
        .map(|k| Complex64::from_polar(basis * bracket(k * k).powf(-p.alpha / 2.0), k as f64 * x))
        .collect();
    let remainder = sigma(p.alpha, Cutoff::Infinite, 1)? - sigma(p.alpha, Cutoff::Finite(tail_modes), 1)?;
    let acc = (0..config.ensemble as u64)
        .into_par_iter()
        .fold(MeanAccumulator::default, |mut acc, i| {
            let mut rng = stream.substream(i).rng();
            let mut value = Complex64::default();
            for (stepper, phi) in &inner {
                let (mut b, mut z) = (Complex64::default(), Complex64::default());
                for _ in 0..steps {
                    stepper.step(&mut rng, &mut b, &mut z);
                }
                value += (b * stepper.c - z) * phi;
            }
            for w in &outer {
                value += complex_gaussian(&mut rng) * w;
            }
            acc.push(value.norm_sqr() + remainder);
            acc
        })
        .reduce(MeanAccumulator::default, MeanAccumulator::merge);
    Ok(OuCheck { estimate: acc.estimate(), oracle: ou_discrepancy_oracle(p.alpha, scale)?, tail_modes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    /// Columns `objective`, `cost`, `potential_term`, `indicator` with unit weights.
    pub report: EnsembleReport,
    pub indicator_frequency: f64,
}

/// Per-sample `γ min(V_β(u), L) 1{‖u‖ ≤ K} + ½∫‖θ_N‖²`, with `u = Y(1) − Z_N(1) + η f_N`.
pub fn objective_estimate(config: &VariationalConfig, stream: &RngStream) -> Result<ObjectiveReport> {
    config.validate()?;
    let p = config.params;
    let bump = build_bump(p.cutoff, config.bump_center, p.geometry)?.field;
    let (steps, dt) = step_count(config.sde_step());
    let table = p.geometry.norm_sq_table();
    let limit = (p.cutoff * p.cutoff) as i64;
    let steppers: Vec<Option<ModeStepper>> = table
        .iter()
        .map(|&nsq| (nsq <= limit).then(|| ModeStepper::new(nsq, p.alpha, p.cutoff, dt, config.scheme)))
        .collect();
    let bump_cost: f64 = bump
        .coeffs()
        .iter()
        .zip(&table)
        .map(|(f, &nsq)| bracket(nsq).powf(p.alpha) * (f * config.eta).norm_sqr())
        .sum::<f64>()
        * 0.5;
    let rows: Vec<[f64; 4]> = (0..config.ensemble as u64)
        .into_par_iter()
        .map_init(
            || (FourierTransform::new(p.geometry), vec![Complex64::default(); p.geometry.num_points()]),
            |(transform, grid), i| {
                let mut rng = stream.substream(i).rng();
                let mut u = bump.scaled(Complex64::new(config.eta, 0.0));
                let mut cost = 0.0;
                for ((slot, stepper), &nsq) in u.coeffs_mut().iter_mut().zip(&steppers).zip(&table) {
                    match stepper {
                        Some(s) => {
                            let (mut b, mut z) = (Complex64::default(), Complex64::default());
                            let mut sum = 0.0;
                            for _ in 0..steps {
                                sum += s.step(&mut rng, &mut b, &mut z).norm_sqr();
                            }
                            cost += bracket(nsq).powf(p.alpha) * sum / dt;
                            *slot += b * s.c - z;
                        }
                        None => *slot += complex_gaussian(&mut rng) * bracket(nsq).powf(-p.alpha / 2.0),
                    }
                }
                let cost = 0.5 * cost + bump_cost;
                transform.synthesize(u.coeffs(), grid);
                let potential =
                    grid.iter().map(|v| (p.beta * v.norm_sqr()).exp()).sum::<f64>() * p.geometry.cell_volume();
                let inside = u.l2_norm() <= config.mass_cutoff;
                let term = if inside { p.gamma * potential.min(config.clip) } else { 0.0 };
                [term + cost, cost, term, if inside { 1.0 } else { 0.0 }]
            },
        )
        .collect();
    let names = ["objective", "cost", "potential_term", "indicator"];
    let columns: Vec<(String, Vec<f64>)> =
        names.iter().enumerate().map(|(j, n)| (n.to_string(), rows.iter().map(|r| r[j]).collect())).collect();
    let weights = vec![1.0; rows.len()];
    let report = EnsembleReport::from_columns(&columns, &weights);
    let indicator_frequency = report.get("indicator").map_or(0.0, |o| o.estimate);
    Ok(ObjectiveReport { report, indicator_frequency })
}
