use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FlowConfig, FlowMode, Stepper};
use crate::measures::ModelParams;
use crate::stats::log_log_slope;
use crate::torus::{project, sobolev_norm, SpectralField};
use crate::{Error, Result};

const MAX_DIMENSION: usize = 20;

/// `|det J − 1|` for the Jacobian of one Galerkin Strang step, by central differences.
///
/// Coordinates are the real and imaginary parts of the modes `|n| ≤ N`; each is
/// perturbed by `h · max(|x_j|, 1)`.
pub fn liouville_check(params: &ModelParams, dt: f64, probe: &SpectralField, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference scale must be positive, got {h}")));
    }
    let limit = (params.cutoff * params.cutoff) as i64;
    let active: Vec<usize> = params
        .geometry
        .norm_sq_table()
        .into_iter()
        .enumerate()
        .filter(|(_, nsq)| *nsq <= limit)
        .map(|(i, _)| i)
        .collect();
    let dim = 2 * active.len();
    if dim > MAX_DIMENSION {
        return Err(Error::InvalidParameter(format!(
            "Jacobian dimension {dim} exceeds the cap of {MAX_DIMENSION}; lower the cutoff"
        )));
    }
    let mut stepper = Stepper::new(FlowConfig::new(*params, dt, dt), FlowMode::Galerkin)?;
    let coords =
        |u: &SpectralField| -> Vec<f64> { active.iter().flat_map(|&i| [u.coeffs()[i].re, u.coeffs()[i].im]).collect() };
    let x0 = coords(probe);
    let mut image = |x: &[f64]| -> Vec<f64> {
        let mut u = probe.clone();
        for (k, &i) in active.iter().enumerate() {
            u.coeffs_mut()[i] = Complex64::new(x[2 * k], x[2 * k + 1]);
        }
        stepper.step(&mut u, dt);
        coords(&u)
    };
    let mut jacobian = DMatrix::<f64>::zeros(dim, dim);
    for j in 0..dim {
        let step = h * x0[j].abs().max(1.0);
        let mut plus = x0.clone();
        let mut minus = x0.clone();
        plus[j] += step;
        minus[j] -= step;
        let (fp, fm) = (image(&plus), image(&minus));
        for i in 0..dim {
            jacobian[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    Ok((jacobian.determinant() - 1.0).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub cutoffs: Vec<usize>,
    /// `sup_t ‖Π_N Φ_N(t)u0 − Φ_ref(t)u0‖_{H^s}` per cutoff.
    pub errors: Vec<f64>,
    pub reference_cutoff: usize,
    /// Fitted exponent `p` in `error ≈ C N^{-p}`, when all errors are positive.
    pub order: Option<f64>,
}

impl ConvergenceTable {
    pub fn is_monotone_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }
}

/// Compares Galerkin flows at each cutoff of `ladder` with the flow at `reference`.
pub fn truncation_convergence(
    u0: &SpectralField,
    cfg: &FlowConfig,
    ladder: &[usize],
    reference: usize,
    s: f64,
) -> Result<ConvergenceTable> {
    cfg.validate()?;
    if ladder.iter().any(|&n| n > reference) {
        return Err(Error::InvalidParameter(format!("reference cutoff {reference} is below a ladder cutoff")));
    }
    if reference > cfg.params.geometry.n_max() {
        return Err(Error::InvalidParameter(format!(
            "reference cutoff {reference} exceeds the stored box n_max = {}",
            cfg.params.geometry.n_max()
        )));
    }
    let (steps, dt) = cfg.steps();
    let run = |cutoff: usize| -> Result<Vec<SpectralField>> {
        let mut stepper =
            Stepper::new(FlowConfig { params: cfg.params.with_cutoff(cutoff), ..*cfg }, FlowMode::Galerkin)?;
        let mut u = u0.clone();
        let mut states = Vec::with_capacity(steps + 1);
        states.push(u.clone());
        for _ in 0..steps {
            stepper.step(&mut u, dt);
            states.push(u.clone());
        }
        Ok(states)
    };
    let reference_states = run(reference)?;
    let errors = ladder
        .par_iter()
        .map(|&n| {
            let states = run(n)?;
            Ok(states
                .iter()
                .zip(&reference_states)
                .map(|(a, b)| sobolev_norm(&project(a, n).sub(b).expect("same geometry"), s))
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    let order = (errors.len() >= 2 && errors.iter().all(|e| *e > 0.0)).then(|| {
        let ns: Vec<f64> = ladder.iter().map(|&n| n as f64).collect();
        -log_log_slope(&ns, &errors)
    });
    Ok(ConvergenceTable { cutoffs: ladder.to_vec(), errors, reference_cutoff: reference, order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::RngStream;
    use crate::torus::{project_high, TorusGeometry};
    use rand::Rng;

    fn random_probe(params: &ModelParams, seed: u64) -> SpectralField {
        let mut rng = RngStream::new(seed, 0).rng();
        let mut u = SpectralField::zeros(params.geometry);
        let limit = (params.cutoff * params.cutoff) as i64;
        for (a, nsq) in u.coeffs_mut().iter_mut().zip(params.geometry.norm_sq_table()) {
            if nsq <= limit {
                *a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        u
    }

    #[test]
    fn unitary_when_uncoupled() {
        let g = TorusGeometry::new(1, 2, 4.0).unwrap();
        let p = ModelParams::new(2.0, 0.5, 0.0, 2, g).unwrap();
        let dev = liouville_check(&p, 1e-3, &random_probe(&p, 1), 1e-5).unwrap();
        assert!(dev <= 1e-10, "{dev}");
    }

    #[test]
    fn volume_preserved_at_random_probes() {
        let g = TorusGeometry::new(1, 2, 4.0).unwrap();
        let p = ModelParams::new(2.0, 0.5, 1.0, 2, g).unwrap();
        for seed in 0..5 {
            let dev = liouville_check(&p, 1e-3, &random_probe(&p, seed), 1e-5).unwrap();
            assert!(dev <= 1e-6, "probe {seed}: {dev}");
        }
    }

    #[test]
    fn dimension_cap() {
        let g = TorusGeometry::new(2, 2, 4.0).unwrap();
        let p = ModelParams::new(3.0, 0.5, 1.0, 2, g).unwrap();
        assert!(matches!(liouville_check(&p, 1e-3, &SpectralField::zeros(g), 1e-5), Err(Error::InvalidParameter(_))));
    }

    fn smooth(g: TorusGeometry) -> SpectralField {
        let mut u = SpectralField::zeros(g);
        for i in 0..g.num_modes() {
            let k = g.frequency(i)[0] as f64;
            u.coeffs_mut()[i] = Complex64::new((-0.1 * k * k).exp(), 0.3 * (-0.1 * (k - 1.0).powi(2)).exp());
        }
        u
    }

    #[test]
    fn linear_errors_equal_projection_tail() {
        let g = TorusGeometry::new(1, 16, 2.0).unwrap();
        let p = ModelParams::new(2.0, 0.5, 0.0, 16, g).unwrap();
        let u0 = smooth(g);
        let table = truncation_convergence(&u0, &FlowConfig::new(p, 1e-2, 0.5), &[2, 4, 8], 16, 0.5).unwrap();
        for (&n, e) in table.cutoffs.iter().zip(&table.errors) {
            let tail = sobolev_norm(&project_high(&u0, n), 0.5);
            assert!((e - tail).abs() <= 1e-12 * tail, "{n}: {e} vs {tail}");
        }
        assert!(table.is_monotone_decreasing());
    }

    #[test]
    fn reference_cutoff_has_zero_error() {
        let g = TorusGeometry::new(1, 16, 2.0).unwrap();
        let p = ModelParams::new(2.0, 0.1, 1.0, 16, g).unwrap();
        let u0 = project(&smooth(g), 12);
        let cfg = FlowConfig::new(p, 1e-2, 0.2);
        let table = truncation_convergence(&u0, &cfg, &[4, 8], 12, 0.5).unwrap();
        assert!(table.is_monotone_decreasing());
        let same = truncation_convergence(&u0, &cfg, &[12], 12, 0.5).unwrap();
        assert_eq!(same.errors, vec![0.0]);
        assert!(truncation_convergence(&u0, &cfg, &[13], 12, 0.5).is_err());
    }
}
