use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_gaussian_with, Evaluator, ModelParams, RngStream};
use crate::stats::{effective_sample_size, weighted_estimate, Estimate};
use crate::torus::SpectralField;
use crate::{Error, Result};

/// How draws from `μ_α` are turned into draws from the Gibbs measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    /// Every draw is kept with weight `e^{-γ V_β}`.
    Importance,
    /// Draws are accepted with probability `e^{-γ (V_β − Vol)} ≤ 1`; requires `γ ≥ 0`.
    Rejection,
}

#[derive(Debug, Clone)]
pub struct WeightedSample {
    /// Index of the proposal among all draws (its substream id).
    pub sample_id: u64,
    pub field: SpectralField,
    pub weight: f64,
    pub potential: f64,
}

#[derive(Debug, Clone)]
pub struct GibbsEnsemble {
    pub mode: SamplerMode,
    pub proposals: usize,
    pub samples: Vec<WeightedSample>,
    /// Estimate of `Z_{α,β,N} = E_μ[e^{-γ V_β(Π_N u)}]`.
    pub partition: Estimate,
}

impl GibbsEnsemble {
    pub fn weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.weight).collect()
    }

    /// Weighted report for the given named observables.
    pub fn report<F>(&self, observables: &[(&str, F)]) -> EnsembleReport
    where
        F: Fn(&WeightedSample) -> f64,
    {
        let weights = self.weights();
        let columns: Vec<(String, Vec<f64>)> =
            observables.iter().map(|(name, f)| (name.to_string(), self.samples.iter().map(f).collect())).collect();
        EnsembleReport::from_columns(&columns, &weights)
    }
}

/// Per-observable weighted statistics of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub ensemble_size: usize,
    pub max_weight_fraction: f64,
    pub observables: Vec<ObservableSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSummary {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub ess: f64,
}

impl EnsembleReport {
    pub fn from_columns(columns: &[(String, Vec<f64>)], weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let max = weights.iter().cloned().fold(0.0, f64::max);
        let observables = columns
            .iter()
            .map(|(name, values)| {
                let e = weighted_estimate(values, weights);
                ObservableSummary { name: name.clone(), estimate: e.estimate, stderr: e.stderr, ess: e.ess }
            })
            .collect();
        Self {
            ensemble_size: weights.len(),
            max_weight_fraction: if total > 0.0 { max / total } else { 0.0 },
            observables,
        }
    }

    pub fn get(&self, name: &str) -> Option<&ObservableSummary> {
        self.observables.iter().find(|o| o.name == name)
    }
}

/// Samples the truncated Gibbs measure `ρ_{α,β,N}` through its density against `μ_α`.
///
/// Proposal `i` uses `stream.substream(i)`, so the ensemble is identical for
/// any thread count.
pub fn gibbs_ensemble(
    params: &ModelParams,
    proposals: usize,
    stream: &RngStream,
    mode: SamplerMode,
) -> Result<GibbsEnsemble> {
    params.validate()?;
    if proposals == 0 {
        return Err(Error::InvalidParameter("ensemble size must be positive".into()));
    }
    if mode == SamplerMode::Rejection && params.gamma < 0.0 {
        return Err(Error::InvalidParameter(
            "rejection sampling needs gamma >= 0 (the focusing density is unbounded)".into(),
        ));
    }
    let volume = params.geometry.volume();
    let drawn: Vec<Option<WeightedSample>> = (0..proposals as u64)
        .into_par_iter()
        .map_init(
            || Evaluator::new(params.geometry),
            |eval, i| {
                let mut rng = stream.substream(i).rng();
                let field = sample_gaussian_with(params, &mut rng);
                let potential = eval.potential(&field, params.beta, Some(params.cutoff));
                match mode {
                    SamplerMode::Importance => Some(WeightedSample {
                        sample_id: i,
                        weight: (-params.gamma * potential).exp(),
                        field,
                        potential,
                    }),
                    SamplerMode::Rejection => {
                        let accept = (-params.gamma * (potential - volume)).exp();
                        let u: f64 = rng.gen();
                        (u < accept).then_some(WeightedSample { sample_id: i, weight: 1.0, field, potential })
                    }
                }
            },
        )
        .collect();
    let m = proposals as f64;
    let (samples, partition) = match mode {
        SamplerMode::Importance => {
            let samples: Vec<WeightedSample> = drawn.into_iter().flatten().collect();
            let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
            let mean = weights.iter().sum::<f64>() / m;
            let var = weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            let partition = Estimate { estimate: mean, stderr: (var / m).sqrt(), ess: effective_sample_size(&weights) };
            (samples, partition)
        }
        SamplerMode::Rejection => {
            let samples: Vec<WeightedSample> = drawn.into_iter().flatten().collect();
            let rate = samples.len() as f64 / m;
            let scale = (-params.gamma * volume).exp();
            let partition = Estimate {
                estimate: scale * rate,
                stderr: scale * (rate * (1.0 - rate) / m).sqrt(),
                ess: samples.len() as f64,
            };
            (samples, partition)
        }
    };
    Ok(GibbsEnsemble { mode, proposals, samples, partition })
}
