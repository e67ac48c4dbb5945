use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DispersionSymbol, FlowConfig, FlowMode, Scheme};
use crate::measures::{sample_gaussian, ModelParams, RngStream, SamplerMode};
use crate::torus::{read_snapshot, sigma, Cutoff, SpectralField, TorusGeometry, DEFAULT_OVERSAMPLING};
use crate::variational::SdeScheme;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Sample,
    Evolve,
    Invariance,
    Moments,
    Variational,
    GaugeCheck,
    Truncation,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sample => "sample",
            ExperimentKind::Evolve => "evolve",
            ExperimentKind::Invariance => "invariance",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Variational => "variational",
            ExperimentKind::GaugeCheck => "gauge-check",
            ExperimentKind::Truncation => "truncation",
        }
    }
}

fn default_oversampling() -> f64 {
    DEFAULT_OVERSAMPLING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub dim: usize,
    pub n_max: usize,
    #[serde(default = "default_oversampling")]
    pub oversampling: f64,
    pub alpha: f64,
    /// Absolute `β`; exclusive with `beta_sigma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// `β σ_{α,N}`, converted to `β` with the truncated variance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_sigma: Option<f64>,
    pub gamma: f64,
    /// Projector cutoff `N`; defaults to `n_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
}

impl ModelSection {
    pub fn params(&self) -> Result<ModelParams> {
        let geometry = TorusGeometry::new(self.dim, self.n_max, self.oversampling)?;
        let cutoff = self.cutoff.unwrap_or(self.n_max);
        let beta = match (self.beta, self.beta_sigma) {
            (Some(b), None) => b,
            (None, Some(level)) => level / sigma(self.alpha, Cutoff::Finite(cutoff), self.dim)?,
            (None, None) => return Err(Error::InvalidParameter("model needs one of beta or beta_sigma".into())),
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParameter("model.beta and model.beta_sigma are mutually exclusive".into()))
            }
        };
        ModelParams::new(self.alpha, beta, self.gamma, cutoff, geometry)
    }
}

fn default_substeps() -> usize {
    1
}

fn default_sobolev_index() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_symbol")]
    pub symbol: DispersionSymbol,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_mode")]
    pub mode: FlowMode,
    #[serde(default = "default_sobolev_index")]
    pub sobolev_index: f64,
    /// Snapshot every this many steps (0: initial and final only).
    #[serde(default)]
    pub snapshot_stride: usize,
}

fn default_symbol() -> DispersionSymbol {
    DispersionSymbol::Bracket
}

fn default_scheme() -> Scheme {
    Scheme::Strang
}

fn default_mode() -> FlowMode {
    FlowMode::Galerkin
}

impl FlowSection {
    pub fn config(&self, params: ModelParams) -> FlowConfig {
        FlowConfig {
            nonlinear_substeps: self.substeps,
            symbol: self.symbol,
            scheme: self.scheme,
            sobolev_index: self.sobolev_index,
            snapshot_stride: self.snapshot_stride,
            ..FlowConfig::new(params, self.dt, self.t_final)
        }
    }
}

/// Initial datum for deterministic runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialDatum {
    /// Explicit coefficients `[n_1, n_2, re, im]` (`n_2` ignored in d = 1).
    Modes {
        modes: Vec<[f64; 4]>,
    },
    /// One draw from `μ_α` on substream `stream` of the run seed.
    Gaussian {
        #[serde(default)]
        stream: u64,
    },
    Snapshot {
        path: PathBuf,
    },
}

impl InitialDatum {
    pub fn build(&self, params: &ModelParams, seed: u64) -> Result<SpectralField> {
        match self {
            InitialDatum::Modes { modes } => {
                let mut pairs = Vec::with_capacity(modes.len());
                for m in modes {
                    if m[0].fract() != 0.0 || m[1].fract() != 0.0 {
                        return Err(Error::InvalidParameter(format!("mode index {:?} is not an integer", &m[..2])));
                    }
                    let n2 = if params.dim() == 1 { 0 } else { m[1] as i64 };
                    pairs.push(([m[0] as i64, n2], Complex64::new(m[2], m[3])));
                }
                SpectralField::from_modes(params.geometry, pairs)
            }
            InitialDatum::Gaussian { stream } => {
                Ok(sample_gaussian(params, &RngStream::new(seed, 0).substream(*stream)))
            }
            InitialDatum::Snapshot { path } => {
                let file = std::fs::File::open(path)?;
                let u = read_snapshot(std::io::BufReader::new(file), params.geometry.oversampling())?;
                if *u.geometry() != params.geometry {
                    return Err(Error::GeometryMismatch(format!(
                        "snapshot {} does not match the model geometry",
                        path.display()
                    )));
                }
                Ok(u)
            }
        }
    }
}

fn default_threshold() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceSection {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl Default for InvarianceSection {
    fn default() -> Self {
        Self { threshold: default_threshold() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    #[serde(default = "default_sampler")]
    pub sampler: SamplerMode,
}

fn default_sampler() -> SamplerMode {
    SamplerMode::Importance
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { sampler: default_sampler() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    /// Exponents `p` of `E[e^{pβ|Π_N u(x)|²}]`.
    pub p: Vec<f64>,
    #[serde(default)]
    pub x: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationalSection {
    /// Mass cutoff `K`.
    pub mass_cutoff: f64,
    /// Clip ladder `L` for the divergence scan.
    pub clips: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Drift scales `N` for the objective estimate; empty skips it.
    #[serde(default)]
    pub scales: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde_dt: Option<f64>,
    #[serde(default)]
    pub scheme: SdeScheme,
}

fn default_eta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSection {
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    /// Largest number of non-zero modes in a random sequence.
    #[serde(default = "default_gauge_modes")]
    pub modes: usize,
    /// Frequencies are drawn from `[-n_max, n_max]`.
    #[serde(default = "default_gauge_modes")]
    pub n_max: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_k() -> Vec<usize> {
    vec![1, 2, 3]
}

fn default_gauge_modes() -> usize {
    4
}

fn default_trials() -> usize {
    100
}

fn default_tolerance() -> f64 {
    1e-10
}

impl Default for GaugeSection {
    fn default() -> Self {
        Self {
            k: default_k(),
            modes: default_gauge_modes(),
            n_max: default_gauge_modes(),
            trials: default_trials(),
            tolerance: default_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    pub ladder: Vec<usize>,
    pub reference: usize,
}

/// One experiment, as read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<usize>,
    /// Extra observables for `sample`: `spectrum` adds the shell spectrum.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observables: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialDatum>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariance: Option<InvarianceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variational: Option<VariationalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationSection>,
}

const KNOWN_OBSERVABLES: [&str; 1] = ["spectrum"];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Model parameters; collocation flows use the `2N_max + 1` collocation grid.
    pub fn params(&self) -> Result<ModelParams> {
        let params = self.model.params()?;
        match &self.flow {
            Some(flow) if flow.mode == FlowMode::Collocation => {
                let geometry = TorusGeometry::collocation(self.model.dim, self.model.n_max)?;
                Ok(ModelParams { geometry, ..params })
            }
            _ => Ok(params),
        }
    }

    pub fn flow_config(&self) -> Result<FlowConfig> {
        let flow = self.require(self.flow.as_ref(), "flow")?;
        let cfg = flow.config(self.params()?);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ensemble_size(&self) -> Result<usize> {
        match self.ensemble {
            Some(m) if m >= 2 => Ok(m),
            Some(m) => Err(Error::InvalidParameter(format!("ensemble must be >= 2, got {m}"))),
            None => Err(Error::InvalidParameter(format!("{} needs an ensemble size", self.kind.name()))),
        }
    }

    fn require<'a, T>(&self, section: Option<&'a T>, name: &str) -> Result<&'a T> {
        section.ok_or_else(|| Error::InvalidParameter(format!("{} needs a `{name}` section", self.kind.name())))
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        let params = self.params()?;
        for name in &self.observables {
            if !KNOWN_OBSERVABLES.contains(&name.as_str()) {
                return Err(Error::InvalidParameter(format!("unknown observable `{name}`")));
            }
        }
        match self.kind {
            ExperimentKind::Sample => {
                self.ensemble_size()?;
            }
            ExperimentKind::Evolve => {
                self.flow_config()?;
                self.require(self.initial.as_ref(), "initial")?;
            }
            ExperimentKind::Invariance => {
                self.flow_config()?;
                self.ensemble_size()?;
            }
            ExperimentKind::Moments => {
                self.ensemble_size()?;
                let m = self.require(self.moments.as_ref(), "moments")?;
                if m.p.is_empty() {
                    return Err(Error::InvalidParameter("moments.p must not be empty".into()));
                }
            }
            ExperimentKind::Variational => {
                self.ensemble_size()?;
                let v = self.require(self.variational.as_ref(), "variational")?;
                if v.clips.is_empty() {
                    return Err(Error::InvalidParameter("variational.clips must not be empty".into()));
                }
                if params.dim() != 1 {
                    return Err(Error::InvalidGeometry("variational experiments are one-dimensional".into()));
                }
            }
            ExperimentKind::GaugeCheck => {
                let g = self.gauge.clone().unwrap_or_default();
                if g.k.is_empty() || g.k.contains(&0) || g.trials == 0 || g.modes == 0 {
                    return Err(Error::InvalidParameter("gauge needs k >= 1, trials >= 1 and modes >= 1".into()));
                }
            }
            ExperimentKind::Truncation => {
                self.flow_config()?;
                self.require(self.initial.as_ref(), "initial")?;
                let t = self.require(self.truncation.as_ref(), "truncation")?;
                if t.ladder.is_empty() {
                    return Err(Error::InvalidParameter("truncation.ladder must not be empty".into()));
                }
            }
        }
        Ok(())
    }
}
