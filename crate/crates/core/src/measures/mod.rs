//! The fractional Gaussian measure `μ_α`, the conserved and measured
//! observables, Gibbs reweighting and closed-form moment oracles.

mod ensemble;
mod moments;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::torus::{bracket, FourierTransform, SpectralField, TorusGeometry};
use crate::{Error, Result};

pub use ensemble::{gibbs_ensemble, EnsembleReport, GibbsEnsemble, SamplerMode, WeightedSample};
pub use moments::{exp_moment_mc, exp_moment_oracle, tail_fit, NormSpec, TailFit, TailFitConfig};

/// Physical and truncation parameters of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Dispersion exponent `α`.
    pub alpha: f64,
    /// Coupling constant `β` of the exponential.
    pub beta: f64,
    /// Interaction sign and strength `γ` (defocusing when positive).
    pub gamma: f64,
    /// Spectral truncation `N` of the Galerkin projector `Π_{≤N}`.
    pub cutoff: usize,
    pub geometry: TorusGeometry,
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, cutoff: usize, geometry: TorusGeometry) -> Result<Self> {
        let params = Self { alpha, beta, gamma, cutoff, geometry };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidParameter(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidParameter("gamma must be finite".into()));
        }
        if self.cutoff > self.geometry.n_max() {
            return Err(Error::InvalidParameter(format!(
                "cutoff {} exceeds stored band {}",
                self.cutoff,
                self.geometry.n_max()
            )));
        }
        Ok(())
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }

    pub fn with_cutoff(self, cutoff: usize) -> Self {
        Self { cutoff, ..self }
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    /// Storage slots with `|n| ≤ N`.
    pub fn active_modes(&self) -> Vec<usize> {
        let limit = (self.cutoff * self.cutoff) as i64;
        self.geometry.norm_sq_table().into_iter().enumerate().filter(|(_, nsq)| *nsq <= limit).map(|(i, _)| i).collect()
    }
}

/// Reproducible source of randomness identified by `(seed, stream_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream `index`; children of distinct parents use distinct keys.
    pub fn substream(&self, index: u64) -> RngStream {
        RngStream { seed: splitmix64(self.seed ^ splitmix64(self.stream_id)), stream_id: index }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard complex Gaussian with `E|g|² = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draw from `μ_α` truncated to `|n| ≤ N`: `a_n = g_n ⟨n⟩^{-α/2}`.
pub fn sample_gaussian(params: &ModelParams, stream: &RngStream) -> SpectralField {
    sample_gaussian_with(params, &mut stream.rng())
}

pub fn sample_gaussian_with<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> SpectralField {
    let mut field = SpectralField::zeros(params.geometry);
    let limit = (params.cutoff * params.cutoff) as i64;
    let table = params.geometry.norm_sq_table();
    for (a, nsq) in field.coeffs_mut().iter_mut().zip(table) {
        if nsq <= limit {
            *a = complex_gaussian(rng) * bracket(nsq).powf(-params.alpha / 2.0);
        }
    }
    field
}

/// `J(u) = ½ ∫ |u|² = ½ Σ |a_n|²`.
pub fn mass(u: &SpectralField) -> f64 {
    0.5 * u.l2_norm_sq()
}

/// `½ ‖⟨∇⟩^{α/2} u‖² = ½ Σ ⟨n⟩^α |a_n|²`.
pub fn kinetic_energy(u: &SpectralField, alpha: f64) -> f64 {
    0.5 * u
        .coeffs()
        .iter()
        .zip(u.geometry().norm_sq_table())
        .map(|(a, nsq)| (1.0 + nsq as f64).powf(alpha / 2.0) * a.norm_sqr())
        .sum::<f64>()
}

/// Grid-based evaluator reusing one FFT plan for repeated observables.
pub struct Evaluator {
    transform: FourierTransform,
    grid: Vec<Complex64>,
    projected: Vec<Complex64>,
    norm_sq: Vec<i64>,
}

impl Evaluator {
    pub fn new(geometry: TorusGeometry) -> Self {
        Self {
            transform: FourierTransform::new(geometry),
            grid: vec![Complex64::new(0.0, 0.0); geometry.num_points()],
            projected: vec![Complex64::new(0.0, 0.0); geometry.num_modes()],
            norm_sq: geometry.norm_sq_table(),
        }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        self.transform.geometry()
    }

    /// Grid values of `Π_{≤N} u`, or of `u` itself when `cutoff` is `None`.
    pub fn grid_values(&mut self, u: &SpectralField, cutoff: Option<usize>) -> &[Complex64] {
        match cutoff {
            Some(n) => {
                let limit = (n * n) as i64;
                for ((p, a), nsq) in self.projected.iter_mut().zip(u.coeffs()).zip(&self.norm_sq) {
                    *p = if *nsq <= limit { *a } else { Complex64::new(0.0, 0.0) };
                }
                self.transform.synthesize(&self.projected, &mut self.grid);
            }
            None => self.transform.synthesize(u.coeffs(), &mut self.grid),
        }
        &self.grid
    }

    /// `V_β(Π_N u) = ∫ e^{β|Π_N u|²} dx` by grid quadrature.
    pub fn potential(&mut self, u: &SpectralField, beta: f64, cutoff: Option<usize>) -> f64 {
        let cell = self.geometry().cell_volume();
        let grid = self.grid_values(u, cutoff);
        grid.iter().map(|v| (beta * v.norm_sqr()).exp()).sum::<f64>() * cell
    }
}

/// `V_β(u) = ∫ e^{β|u|²} dx` on the geometry's (oversampled) grid.
pub fn potential(u: &SpectralField, beta: f64) -> f64 {
    Evaluator::new(*u.geometry()).potential(u, beta, None)
}

/// `min(V_β(u), L)`, the clipped potential used by the variational estimators.
pub fn potential_clipped(u: &SpectralField, beta: f64, clip: Option<f64>) -> f64 {
    let v = potential(u, beta);
    clip.map_or(v, |l| v.min(l))
}

/// `H(u) = ½ Σ ⟨n⟩^α |a_n|² + γ V_β(Π_{≤N} u)`.
pub fn hamiltonian(u: &SpectralField, params: &ModelParams) -> f64 {
    let mut eval = Evaluator::new(params.geometry);
    kinetic_energy(u, params.alpha) + params.gamma * eval.potential(u, params.beta, Some(params.cutoff))
}

/// Gibbs density `e^{-γ V_β(Π_{≤N} u)}` against `μ_α`.
pub fn gibbs_weight(u: &SpectralField, params: &ModelParams) -> f64 {
    let mut eval = Evaluator::new(params.geometry);
    (-params.gamma * eval.potential(u, params.beta, Some(params.cutoff))).exp()
}

/// Standard-Fourier-normalized point value `|φ_n(x)|² = (2π)^{-d}`.
pub(crate) fn basis_density(dim: usize) -> f64 {
    (2.0 * PI).powi(-(dim as i32))
}
