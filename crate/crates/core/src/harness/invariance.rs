use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DispersionSymbol, FlowConfig, FlowMode, Stepper};
use crate::measures::{kinetic_energy, sample_gaussian_with, ModelParams, RngStream};
use crate::stats::weighted_estimate;
use crate::torus::{sobolev_norm, FourierTransform, SpectralField};
use crate::{Error, Result};

/// Fixed-order observables: `J`, `H`, `V_β(Π_N u)`, `‖u‖_{H^s}`, then the shell
/// spectrum `Σ_{k ≤ |n| < k+1} |a_n|²` for `k = 0..=N`.
pub struct ObservableSuite {
    params: ModelParams,
    sobolev_index: f64,
    transform: FourierTransform,
    work: Vec<Complex64>,
    grid: Vec<Complex64>,
    shells: Vec<Option<usize>>,
}

impl ObservableSuite {
    pub fn new(params: ModelParams, sobolev_index: f64) -> Self {
        let limit = (params.cutoff * params.cutoff) as i64;
        let shells = params
            .geometry
            .norm_sq_table()
            .into_iter()
            .map(|nsq| (nsq <= limit).then(|| (nsq as f64).sqrt().floor() as usize))
            .collect();
        Self {
            params,
            sobolev_index,
            transform: FourierTransform::new(params.geometry),
            work: vec![Complex64::default(); params.geometry.num_modes()],
            grid: vec![Complex64::default(); params.geometry.num_points()],
            shells,
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> =
            ["mass", "hamiltonian", "potential", "sobolev_norm"].iter().map(|s| s.to_string()).collect();
        names.extend((0..=self.params.cutoff).map(|k| format!("spectrum_{k}")));
        names
    }

    /// `V_β(Π_N u)` for an arbitrary `β`.
    pub fn potential_at(&mut self, u: &SpectralField, beta: f64) -> f64 {
        for ((w, a), shell) in self.work.iter_mut().zip(u.coeffs()).zip(&self.shells) {
            *w = if shell.is_some() { *a } else { Complex64::default() };
        }
        self.transform.synthesize(&self.work, &mut self.grid);
        self.grid.iter().map(|v| (beta * v.norm_sqr()).exp()).sum::<f64>() * self.params.geometry.cell_volume()
    }

    pub fn evaluate(&mut self, u: &SpectralField) -> Vec<f64> {
        let p = self.params;
        let potential = self.potential_at(u, p.beta);
        let mut out = vec![
            0.5 * u.l2_norm_sq(),
            kinetic_energy(u, p.alpha) + p.gamma * potential,
            potential,
            sobolev_norm(u, self.sobolev_index),
        ];
        let mut spectrum = vec![0.0; p.cutoff + 1];
        for (a, shell) in u.coeffs().iter().zip(&self.shells) {
            if let Some(k) = shell {
                spectrum[*k] += a.norm_sqr();
            }
        }
        out.extend(spectrum);
        out
    }
}

/// [`ObservableSuite::evaluate`] with `s = 1/2`.
pub fn observable_suite(u: &SpectralField, params: &ModelParams) -> Vec<f64> {
    ObservableSuite::new(*params, 0.5).evaluate(u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableComparison {
    pub name: String,
    pub mean_initial: f64,
    pub mean_final: f64,
    /// Weighted mean of the paired differences `O(u(T)) − O(u(0))`.
    pub mean_difference: f64,
    pub stderr: f64,
    pub z: f64,
    /// 95% percentile bootstrap interval of the weighted paired difference.
    pub bootstrap_ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub ensemble: usize,
    pub horizon: f64,
    pub threshold: f64,
    pub effective_sample_size: f64,
    pub observables: Vec<ObservableComparison>,
    pub max_abs_z: f64,
    pub pass: bool,
    /// Same trajectories reweighted with the `β′ = 2β` measure, observable `V_β`.
    pub negative_control: ObservableComparison,
    /// The control must reject (`|z| > threshold`) for the test to be informative.
    pub negative_control_rejects: bool,
    pub max_relative_hamiltonian_drift: f64,
    pub warnings: Vec<String>,
}

impl InvarianceReport {
    /// Passed and the negative control rejected, so the pass is informative.
    pub fn conclusive_pass(&self) -> bool {
        self.pass && self.negative_control_rejects
    }
}

/// Numerical floor on the standard error, relative to the observable's scale.
///
/// Conserved observables have paired differences at integrator accuracy; without
/// a floor their z-scores measure integrator bias rather than the measure.
pub const RELATIVE_SE_FLOOR: f64 = 1e-9;

const BOOTSTRAP_RESAMPLES: usize = 200;

/// Density of the flow-invariant measure relative to `μ_α`.
///
/// With `E|a_n|² = ⟨n⟩^{-α}` the Gaussian density is `e^{-Σ⟨n⟩^α|a_n|²} = e^{-2·(½Σ⟨n⟩^α|a_n|²)}`,
/// and the flow `i∂_t u = Lu + 2γβe^{β|u|²}u` conserves the same doubled Hamiltonian,
/// so the invariant weight is `e^{-2γV_β}`.
pub fn invariant_weight(potential: f64, gamma: f64) -> f64 {
    (-2.0 * gamma * potential).exp()
}

/// Weighted paired-difference test of Gibbs-measure invariance under the Galerkin flow.
pub fn invariance_test(
    params: &ModelParams,
    cfg: &FlowConfig,
    horizon: f64,
    ensemble: usize,
    stream: &RngStream,
    threshold: f64,
) -> Result<InvarianceReport> {
    params.validate()?;
    if !(params.gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "invariance needs a defocusing coupling gamma > 0, got {}",
            params.gamma
        )));
    }
    if ensemble < 2 {
        return Err(Error::InvalidParameter("ensemble must hold at least two samples".into()));
    }
    let mut warnings = Vec::new();
    if cfg.symbol == DispersionSymbol::Pure {
        warnings
            .push("symbol |n|^alpha does not match the Gaussian weights <n>^alpha; invariance is not expected".into());
    }
    let flow = FlowConfig { params: *params, t_final: horizon, ..*cfg };
    flow.validate()?;
    let (steps, dt) = flow.steps();
    let alt_beta = 2.0 * params.beta;

    struct Sample {
        initial: Vec<f64>,
        last: Vec<f64>,
        weight: f64,
        alt_weight: f64,
        drift: f64,
    }

    let samples: Vec<Sample> = (0..ensemble as u64)
        .into_par_iter()
        .map_init(
            || (ObservableSuite::new(*params, cfg.sobolev_index), Stepper::new(flow, FlowMode::Galerkin)),
            |(suite, stepper), i| {
                let stepper = stepper.as_mut().expect("flow validated above");
                let mut u = sample_gaussian_with(params, &mut stream.substream(i).rng());
                let initial = suite.evaluate(&u);
                let alt = suite.potential_at(&u, alt_beta);
                let h0 = stepper.hamiltonian(&u);
                for _ in 0..steps {
                    stepper.step(&mut u, dt);
                }
                let h1 = stepper.hamiltonian(&u);
                let last = suite.evaluate(&u);
                Sample {
                    weight: invariant_weight(initial[2], params.gamma),
                    alt_weight: invariant_weight(alt, params.gamma),
                    initial,
                    last,
                    drift: ((h1 - h0) / h0).abs(),
                }
            },
        )
        .collect();

    let names = ObservableSuite::new(*params, cfg.sobolev_index).names();
    let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    let alt_weights: Vec<f64> = samples.iter().map(|s| s.alt_weight).collect();
    let mut boot_rng = stream.substream(u64::MAX).rng();
    let resamples: Vec<Vec<usize>> =
        (0..BOOTSTRAP_RESAMPLES).map(|_| (0..ensemble).map(|_| boot_rng.gen_range(0..ensemble)).collect()).collect();

    let compare = |j: usize, weights: &[f64]| -> ObservableComparison {
        let initial: Vec<f64> = samples.iter().map(|s| s.initial[j]).collect();
        let last: Vec<f64> = samples.iter().map(|s| s.last[j]).collect();
        let diffs: Vec<f64> = initial.iter().zip(&last).map(|(a, b)| b - a).collect();
        let m0 = weighted_estimate(&initial, weights).estimate;
        let m1 = weighted_estimate(&last, weights).estimate;
        let d = weighted_estimate(&diffs, weights);
        let floor = RELATIVE_SE_FLOOR * m0.abs().max(m1.abs());
        let stderr = d.stderr.hypot(floor);
        let z = if stderr > 0.0 { d.estimate / stderr } else { 0.0 };
        let mut boot: Vec<f64> = resamples
            .iter()
            .map(|idx| {
                let (num, den) = idx.iter().fold((0.0, 0.0), |(n, w), &i| (n + weights[i] * diffs[i], w + weights[i]));
                num / den
            })
            .collect();
        boot.sort_by(f64::total_cmp);
        let lo = boot[(0.025 * BOOTSTRAP_RESAMPLES as f64) as usize];
        let hi = boot[((0.975 * BOOTSTRAP_RESAMPLES as f64) as usize).min(BOOTSTRAP_RESAMPLES - 1)];
        ObservableComparison {
            name: names[j].clone(),
            mean_initial: m0,
            mean_final: m1,
            mean_difference: d.estimate,
            stderr,
            z,
            bootstrap_ci: (lo, hi),
        }
    };

    let observables: Vec<ObservableComparison> = (0..names.len()).map(|j| compare(j, &weights)).collect();
    let max_abs_z = observables.iter().map(|o| o.z.abs()).fold(0.0, f64::max);
    let negative_control = compare(2, &alt_weights);
    Ok(InvarianceReport {
        ensemble,
        horizon,
        threshold,
        effective_sample_size: crate::stats::effective_sample_size(&weights),
        pass: max_abs_z <= threshold,
        max_abs_z,
        negative_control_rejects: negative_control.z.abs() > threshold,
        negative_control,
        observables,
        max_relative_hamiltonian_drift: samples.iter().map(|s| s.drift).fold(0.0, f64::max),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::sample_gaussian;
    use crate::torus::{bracket, TorusGeometry};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params(beta: f64, gamma: f64) -> ModelParams {
        ModelParams::new(2.5, beta, gamma, 6, TorusGeometry::new(1, 6, 4.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_field_suite() {
        let p = params(0.3, 1.7);
        let v = observable_suite(&SpectralField::zeros(p.geometry), &p);
        assert_eq!(v.len(), 4 + 7);
        assert_eq!(v[0], 0.0);
        assert_relative_eq!(v[1], 2.0 * PI * 1.7, max_relative = 1e-13);
        assert_relative_eq!(v[2], 2.0 * PI, max_relative = 1e-13);
        assert!(v[3..].iter().all(|x| *x == 0.0));
        assert_eq!(ObservableSuite::new(p, 0.5).names().len(), v.len());
    }

    #[test]
    fn mean_mass_matches_gaussian_moment() {
        let p = params(0.3, 1.0);
        let mut suite = ObservableSuite::new(p, 0.5);
        let stream = RngStream::new(11, 0);
        let masses: Vec<f64> =
            (0..4000).map(|i| suite.evaluate(&sample_gaussian(&p, &stream.substream(i)))[0]).collect();
        let e = crate::stats::mean_estimate(&masses);
        let exact: f64 = 0.5 * (-6i64..=6).map(|n| bracket(n * n).powf(-2.5)).sum::<f64>();
        assert!(e.covers(exact, 3.0), "{} vs {exact} (se {})", e.estimate, e.stderr);
    }

    proptest! {
        #[test]
        fn spectrum_ignores_phases(seed in 0u64..1000, theta in 0.0f64..6.3) {
            let p = params(0.3, 1.0);
            let u = sample_gaussian(&p, &RngStream::new(seed, 0));
            let mut rotated = u.clone();
            for a in rotated.coeffs_mut() {
                *a *= Complex64::from_polar(1.0, theta);
            }
            let a = observable_suite(&u, &p);
            let b = observable_suite(&rotated, &p);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn linear_flow_is_invariant() {
        let p = params(0.0, 2.0);
        let cfg = FlowConfig::new(p, 0.05, 1.0);
        let report = invariance_test(&p, &cfg, 1.0, 400, &RngStream::new(3, 0), 3.0).unwrap();
        assert!(report.pass, "max |z| = {}", report.max_abs_z);
        assert!(report.observables.iter().all(|o| o.z.is_finite() && o.stderr >= 0.0));
        assert!(report.max_relative_hamiltonian_drift < 1e-12);
    }

    #[test]
    fn rejects_focusing_and_warns_on_pure_symbol() {
        let p = params(0.1, -1.0);
        let cfg = FlowConfig::new(p, 0.1, 0.2);
        assert!(invariance_test(&p, &cfg, 0.2, 10, &RngStream::new(0, 0), 3.0).is_err());
        let p = params(0.1, 1.0);
        let cfg = FlowConfig { symbol: DispersionSymbol::Pure, ..FlowConfig::new(p, 0.1, 0.2) };
        let report = invariance_test(&p, &cfg, 0.2, 10, &RngStream::new(0, 0), 3.0).unwrap();
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn invariant_weight_doubles_the_coupling() {
        assert_relative_eq!(invariant_weight(2.0, 0.5), (-2.0f64).exp());
    }
}
