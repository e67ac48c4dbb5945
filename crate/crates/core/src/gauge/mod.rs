//! Gauge transform and resonance decomposition of the exponential nonlinearity (d = 1).

mod multilinear;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, FlowConfig, FlowMode, Stepper, Trajectory};
use crate::measures::ModelParams;
use crate::torus::{to_grid, FourierTransform, GridField, SpectralField, TorusGeometry};
use crate::{Error, Result};

pub use multilinear::{
    decomposition_check, multilinear_forms, multilinear_n, multilinear_r, DecompositionCheck, MultilinearForms,
    MultilinearSpec, ResonantCounting, ENUMERATION_BUDGET,
};

/// Coefficients `c_n` of the standard series `Σ_{|n| ≤ n_max} c_n e^{inx}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSequence {
    n_max: usize,
    coeffs: Vec<Complex64>,
}

impl CoeffSequence {
    pub fn zeros(n_max: usize) -> Self {
        Self { n_max, coeffs: vec![Complex64::new(0.0, 0.0); 2 * n_max + 1] }
    }

    /// `coeffs[i]` is `c_{i − n_max}`.
    pub fn from_vec(n_max: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != 2 * n_max + 1 {
            return Err(Error::InvalidParameter(format!(
                "expected {} coefficients for n_max = {n_max}, got {}",
                2 * n_max + 1,
                coeffs.len()
            )));
        }
        Ok(Self { n_max, coeffs })
    }

    pub fn from_pairs(n_max: usize, pairs: &[(i64, Complex64)]) -> Result<Self> {
        let mut out = Self::zeros(n_max);
        for &(n, c) in pairs {
            if n.unsigned_abs() as usize > n_max {
                return Err(Error::InvalidParameter(format!("frequency {n} outside |n| <= {n_max}")));
            }
            out.set(n, c);
        }
        Ok(out)
    }

    /// `c_n = (2π)^{-1/2} a_n` for a one-dimensional field.
    pub fn from_field(u: &SpectralField) -> Result<Self> {
        let g = u.geometry();
        if g.dim() != 1 {
            return Err(Error::InvalidGeometry("coefficient sequences are one-dimensional".into()));
        }
        let n = g.n_max() as i64;
        let scale = (2.0 * PI).sqrt().recip();
        Ok(Self { n_max: g.n_max(), coeffs: (-n..=n).map(|k| u.coeff([k, 0]) * scale).collect() })
    }

    pub fn to_field(&self, geometry: TorusGeometry) -> Result<SpectralField> {
        if geometry.dim() != 1 || geometry.n_max() < self.n_max {
            return Err(Error::GeometryMismatch(format!(
                "sequence with n_max = {} does not fit {geometry:?}",
                self.n_max
            )));
        }
        let scale = (2.0 * PI).sqrt();
        SpectralField::from_modes(geometry, self.support().into_iter().map(|(n, c)| ([n, 0], c * scale)))
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, n: i64) -> Complex64 {
        if n.unsigned_abs() as usize > self.n_max {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(n + self.n_max as i64) as usize]
        }
    }

    /// Panics if `|n| > n_max`.
    pub fn set(&mut self, n: i64, c: Complex64) {
        let i = (n + self.n_max as i64) as usize;
        self.coeffs[i] = c;
    }

    /// Nonzero coefficients in increasing frequency.
    pub fn support(&self) -> Vec<(i64, Complex64)> {
        let offset = self.n_max as i64;
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != Complex64::new(0.0, 0.0))
            .map(|(i, c)| (i as i64 - offset, *c))
            .collect()
    }

    /// `𝒜[v] = c_0`.
    pub fn mean(&self) -> Complex64 {
        self.get(0)
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self { n_max: self.n_max, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        let n_max = self.n_max.max(other.n_max);
        let n = n_max as i64;
        Self { n_max, coeffs: (-n..=n).map(|k| self.get(k) + other.get(k) * sign).collect() }
    }

    /// Coefficientwise conjugate `c_n ↦ conj(c_n)`.
    pub fn conj_coeffs(&self) -> Self {
        Self { n_max: self.n_max, coeffs: self.coeffs.iter().map(|c| c.conj()).collect() }
    }

    /// Coefficients of the conjugate function: `c_n ↦ conj(c_{−n})`.
    pub fn conj_function(&self) -> Self {
        Self { n_max: self.n_max, coeffs: self.coeffs.iter().rev().map(|c| c.conj()).collect() }
    }

    /// Coefficients of the pointwise product.
    pub fn convolve(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.n_max + other.n_max);
        for (n, a) in self.support() {
            for (m, b) in other.support() {
                let i = (n + m + out.n_max as i64) as usize;
                out.coeffs[i] += a * b;
            }
        }
        out
    }

    /// Coefficients of `|v|^{2k}`.
    pub fn modulus_power(&self, k: usize) -> Self {
        let density = self.convolve(&self.conj_function());
        let mut out = Self::from_pairs(0, &[(0, Complex64::new(1.0, 0.0))]).expect("constant");
        for _ in 0..k {
            out = out.convolve(&density);
        }
        out
    }
}

/// `𝒜[f] = (2π)^{-1} ∫ f dx`, by grid quadrature.
pub fn mean_functional(f: &GridField) -> Result<Complex64> {
    if f.geometry().dim() != 1 {
        return Err(Error::InvalidGeometry("the mean functional is one-dimensional".into()));
    }
    Ok(f.mean())
}

/// `𝒢(u) = 2γβ 𝒜[(1 + β|u|²) e^{β|u|²}]`.
pub fn gauge_value(u: &SpectralField, params: &ModelParams) -> Result<f64> {
    check_one_dimensional(u)?;
    Ok(gauge_from_grid(to_grid(u).values(), params))
}

/// `2γβ Σ_{k < terms} (β^k/k!)(k+1) 𝒜[|u|^{2k}]`.
pub fn gauge_value_series(u: &SpectralField, params: &ModelParams, terms: usize) -> Result<f64> {
    check_one_dimensional(u)?;
    let grid = to_grid(u);
    let beta = params.beta;
    let mut total = 0.0;
    let mut factor = 1.0;
    for k in 0..terms {
        let moment =
            grid.values().iter().map(|v| v.norm_sqr().powi(k as i32)).sum::<f64>() / grid.values().len() as f64;
        total += factor * (k as f64 + 1.0) * moment;
        factor *= beta / (k as f64 + 1.0);
    }
    Ok(2.0 * params.gamma * beta * total)
}

fn gauge_from_grid(values: &[Complex64], params: &ModelParams) -> f64 {
    let beta = params.beta;
    let mean = values
        .iter()
        .map(|v| {
            let r = beta * v.norm_sqr();
            (1.0 + r) * r.exp()
        })
        .sum::<f64>()
        / values.len() as f64;
    2.0 * params.gamma * beta * mean
}

fn check_one_dimensional(u: &SpectralField) -> Result<()> {
    if u.geometry().dim() != 1 {
        return Err(Error::InvalidGeometry("the gauge is defined for d = 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaugeDirection {
    /// `v(t) = e^{+i∫_0^t 𝒢(u)} u(t)`.
    Forward,
    /// `u(t) = e^{−i∫_0^t 𝒢(v)} v(t)`.
    Inverse,
}

/// `∫_0^{t_j} f` at every node of a uniform grid: composite Simpson, with the
/// 3/8 rule on the last three panels for odd `j` and a three-point rule at `j = 1`.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = h * (values[0] + values[1]) / 2.0;
        return out;
    }
    for j in 1..n {
        out[j] = if j % 2 == 0 {
            out[j - 2] + h / 3.0 * (values[j - 2] + 4.0 * values[j - 1] + values[j])
        } else if j == 1 {
            h / 12.0 * (5.0 * values[0] + 8.0 * values[1] - values[2])
        } else {
            out[j - 3] + 3.0 * h / 8.0 * (values[j - 3] + 3.0 * values[j - 2] + 3.0 * values[j - 1] + values[j])
        };
    }
    out
}

/// Multiplies every snapshot by `e^{±i∫_0^t 𝒢}`, the integral taken over the snapshots.
pub fn apply_gauge(traj: &Trajectory, params: &ModelParams, direction: GaugeDirection) -> Result<Trajectory> {
    let times: Vec<f64> = traj.snapshots.iter().map(|(t, _)| *t).collect();
    let h = match times.len() {
        0 => return Err(Error::InvalidParameter("empty trajectory".into())),
        1 => 0.0,
        _ => times[1] - times[0],
    };
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1e-300) {
            return Err(Error::InvalidParameter("gauge quadrature needs uniformly spaced snapshots".into()));
        }
    }
    let g = traj.snapshots.iter().map(|(_, u)| gauge_value(u, params)).collect::<Result<Vec<f64>>>()?;
    let phases = cumulative_simpson(&g, h);
    let sign = match direction {
        GaugeDirection::Forward => 1.0,
        GaugeDirection::Inverse => -1.0,
    };
    let snapshots = traj
        .snapshots
        .iter()
        .zip(&phases)
        .map(|((t, u), theta)| {
            (*t, if *theta == 0.0 { u.clone() } else { u.scaled(Complex64::from_polar(1.0, sign * theta)) })
        })
        .collect();
    Ok(Trajectory { records: traj.records.clone(), snapshots })
}

/// Strang integration of the gauged equation `i v_t = Lv + 2γβ e^{β|v|²}v − 𝒢(v)v`.
///
/// `𝒢(v)` is constant in `x` and invariant under the pointwise nonlinear phase,
/// so the gauge term is one more exact phase inside the nonlinear substep.
pub fn gauged_flow(v0: &SpectralField, cfg: &FlowConfig) -> Result<Trajectory> {
    check_one_dimensional(v0)?;
    let mut stepper = Stepper::new(*cfg, FlowMode::Collocation)?;
    let mut transform = FourierTransform::new(cfg.params.geometry);
    let mut grid = vec![Complex64::new(0.0, 0.0); cfg.params.geometry.num_points()];
    let (steps, dt) = cfg.steps();
    let mut v = v0.clone();
    let mut records = vec![stepper.diagnostics(0.0, &v)];
    let mut snapshots = vec![(0.0, v.clone())];
    for k in 1..=steps {
        stepper.linear(&mut v, dt / 2.0);
        transform.synthesize(v.coeffs(), &mut grid);
        let theta = dt * gauge_from_grid(&grid, &cfg.params);
        stepper.nonlinear(&mut v, dt);
        v = v.scaled(Complex64::from_polar(1.0, theta));
        stepper.linear(&mut v, dt / 2.0);
        let t = if k == steps { cfg.t_final } else { k as f64 * dt };
        records.push(stepper.diagnostics(t, &v));
        if k == steps || (cfg.snapshot_stride > 0 && k % cfg.snapshot_stride == 0) {
            snapshots.push((t, v.clone()));
        }
    }
    Ok(Trajectory { records, snapshots })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeEquivalence {
    /// `sup_t ‖v(t) − 𝔾(u)(t)‖_{L²}`.
    pub discrepancy: f64,
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
}

/// Integrates `u` (collocation) and the gauged equation from the same datum and
/// compares `v` with the gauge of `u` at every step up to `horizon`.
pub fn gauged_flow_equivalence(u0: &SpectralField, cfg: &FlowConfig, horizon: f64) -> Result<GaugeEquivalence> {
    let cfg = FlowConfig { t_final: horizon, snapshot_stride: 1, ..*cfg };
    let u = evolve(u0, &cfg, FlowMode::Collocation)?;
    let gauged = apply_gauge(&u, &cfg.params, GaugeDirection::Forward)?;
    let v = gauged_flow(u0, &cfg)?;
    let errors: Vec<f64> = gauged
        .snapshots
        .iter()
        .zip(&v.snapshots)
        .map(|((_, a), (_, b))| a.sub(b).map(|d| d.l2_norm()))
        .collect::<Result<_>>()?;
    Ok(GaugeEquivalence {
        discrepancy: errors.iter().cloned().fold(0.0, f64::max),
        times: v.snapshots.iter().map(|(t, _)| *t).collect(),
        errors,
    })
}
