//! Split-step time integration of the exponential NLS and its Galerkin truncation.
//!
//! The equation integrated is `i ∂_t u = L u + 2γβ e^{β|u|²} u`, with `L` the
//! diagonal dispersion operator, so that `H = ½⟨Lu, u⟩ + γ V_β` is conserved.

mod analysis;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::measures::ModelParams;
use crate::torus::{sobolev_norm, FourierTransform, SpectralField, TorusGeometry};
use crate::{Error, Result};

pub use analysis::{liouville_check, truncation_convergence, ConvergenceTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispersionSymbol {
    /// `⟨n⟩^α = (1 + |n|²)^{α/2}`, consistent with the Gaussian measure.
    Bracket,
    /// `|n|^α`.
    Pure,
}

impl DispersionSymbol {
    pub fn omega(self, norm_sq: i64, alpha: f64) -> f64 {
        match self {
            DispersionSymbol::Bracket => (1.0 + norm_sq as f64).powf(alpha / 2.0),
            DispersionSymbol::Pure if norm_sq == 0 => 0.0,
            DispersionSymbol::Pure => (norm_sq as f64).powf(alpha / 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Strang,
    Lie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowMode {
    /// Truncated flow: nonlinearity acts on `Π_{≤N}u`, higher modes evolve linearly.
    Galerkin,
    /// Untruncated flow at grid resolution; needs a collocation geometry.
    Collocation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub params: ModelParams,
    pub dt: f64,
    pub nonlinear_substeps: usize,
    pub t_final: f64,
    pub symbol: DispersionSymbol,
    pub scheme: Scheme,
    /// Index `s` of the `H^s` norm recorded in the diagnostics.
    pub sobolev_index: f64,
    /// Keep every `k`-th state in the trajectory; 0 keeps only the endpoints.
    pub snapshot_stride: usize,
}

impl FlowConfig {
    pub fn new(params: ModelParams, dt: f64, t_final: f64) -> Self {
        Self {
            params,
            dt,
            nonlinear_substeps: 1,
            t_final,
            symbol: DispersionSymbol::Bracket,
            scheme: Scheme::Strang,
            sobolev_index: 0.5,
            snapshot_stride: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidParameter(format!("t_final must be >= 0, got {}", self.t_final)));
        }
        if self.nonlinear_substeps == 0 {
            return Err(Error::InvalidParameter("nonlinear_substeps must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of macro steps and their length, so that they land exactly on `t_final`.
    pub fn steps(&self) -> (usize, f64) {
        let n = (self.t_final / self.dt).round().max(if self.t_final > 0.0 { 1.0 } else { 0.0 }) as usize;
        if n == 0 {
            (0, self.dt)
        } else {
            (n, self.t_final / n as f64)
        }
    }
}

/// Integrator state: FFT plans, frequency tables and RK4 buffers for one trajectory.
pub struct Stepper {
    cfg: FlowConfig,
    mode: FlowMode,
    transform: FourierTransform,
    omega: Vec<f64>,
    active: Vec<bool>,
    grid: Vec<Complex64>,
    work: Vec<Complex64>,
    stages: [Vec<Complex64>; 4],
}

impl Stepper {
    pub fn new(cfg: FlowConfig, mode: FlowMode) -> Result<Self> {
        cfg.validate()?;
        let geometry = cfg.params.geometry;
        if mode == FlowMode::Collocation && !geometry.is_collocation() {
            return Err(Error::InvalidGeometry(format!(
                "collocation mode needs grid = 2*n_max + 1 = {}, got {}",
                2 * geometry.n_max() + 1,
                geometry.grid()
            )));
        }
        let table = geometry.norm_sq_table();
        let limit = (cfg.params.cutoff * cfg.params.cutoff) as i64;
        let zeros = vec![Complex64::new(0.0, 0.0); geometry.num_modes()];
        Ok(Self {
            cfg,
            mode,
            transform: FourierTransform::new(geometry),
            omega: table.iter().map(|&nsq| cfg.symbol.omega(nsq, cfg.params.alpha)).collect(),
            active: table.iter().map(|&nsq| mode == FlowMode::Collocation || nsq <= limit).collect(),
            grid: vec![Complex64::new(0.0, 0.0); geometry.num_points()],
            work: zeros.clone(),
            stages: [zeros.clone(), zeros.clone(), zeros.clone(), zeros],
        })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    pub fn mode(&self) -> FlowMode {
        self.mode
    }

    /// `a_n ↦ e^{-itω_n} a_n`.
    pub fn linear(&self, u: &mut SpectralField, t: f64) {
        for (a, w) in u.coeffs_mut().iter_mut().zip(&self.omega) {
            *a *= Complex64::from_polar(1.0, -t * w);
        }
    }

    pub fn nonlinear(&mut self, u: &mut SpectralField, t: f64) {
        let p = self.cfg.params;
        if p.gamma * p.beta == 0.0 || t == 0.0 {
            return;
        }
        match self.mode {
            FlowMode::Collocation => self.collocation_phase(u, t),
            FlowMode::Galerkin => {
                let substeps = self.cfg.nonlinear_substeps;
                let h = t / substeps as f64;
                for _ in 0..substeps {
                    self.rk4(u, h);
                }
            }
        }
    }

    /// One macro step of signed length `dt`.
    pub fn step(&mut self, u: &mut SpectralField, dt: f64) {
        match self.cfg.scheme {
            Scheme::Strang => {
                self.linear(u, dt / 2.0);
                self.nonlinear(u, dt);
                self.linear(u, dt / 2.0);
            }
            Scheme::Lie => {
                self.linear(u, dt);
                self.nonlinear(u, dt);
            }
        }
    }

    /// `V_β` of the field the nonlinearity sees: `Π_{≤N}u` (Galerkin) or `u` (collocation).
    pub fn potential(&mut self, u: &SpectralField) -> f64 {
        self.load(u);
        let beta = self.cfg.params.beta;
        let cell = self.cfg.params.geometry.cell_volume();
        self.grid.iter().map(|v| (beta * v.norm_sqr()).exp()).sum::<f64>() * cell
    }

    /// `½ Σ ω_n |a_n|² + γ V_β`, the conserved energy of the selected flow.
    pub fn hamiltonian(&mut self, u: &SpectralField) -> f64 {
        let quad: f64 = u.coeffs().iter().zip(&self.omega).map(|(a, w)| w * a.norm_sqr()).sum();
        0.5 * quad + self.cfg.params.gamma * self.potential(u)
    }

    pub fn diagnostics(&mut self, t: f64, u: &SpectralField) -> Record {
        let potential = self.potential(u);
        let quad: f64 = u.coeffs().iter().zip(&self.omega).map(|(a, w)| w * a.norm_sqr()).sum();
        Record {
            t,
            mass: 0.5 * u.l2_norm_sq(),
            hamiltonian: 0.5 * quad + self.cfg.params.gamma * potential,
            potential,
            h_s_norm: sobolev_norm(u, self.cfg.sobolev_index),
        }
    }

    /// Grid values of the active part of `u`.
    fn load(&mut self, u: &SpectralField) {
        for ((w, a), on) in self.work.iter_mut().zip(u.coeffs()).zip(&self.active) {
            *w = if *on { *a } else { Complex64::new(0.0, 0.0) };
        }
        self.transform.synthesize(&self.work, &mut self.grid);
    }

    fn collocation_phase(&mut self, u: &mut SpectralField, t: f64) {
        let p = self.cfg.params;
        self.transform.synthesize(u.coeffs(), &mut self.grid);
        let c = -2.0 * p.gamma * p.beta * t;
        for v in self.grid.iter_mut() {
            *v *= Complex64::from_polar(1.0, c * (p.beta * v.norm_sqr()).exp());
        }
        self.transform.analyze(&self.grid, u.coeffs_mut());
    }

    /// `out = -2iγβ Π_{≤N}[e^{β|b|²} b]` for `b` supported on the active modes.
    fn field(&mut self, b: usize, out: usize) {
        let p = self.cfg.params;
        self.transform.synthesize(&self.stages[b], &mut self.grid);
        for v in self.grid.iter_mut() {
            *v *= (p.beta * v.norm_sqr()).exp();
        }
        let scale = Complex64::new(0.0, -2.0 * p.gamma * p.beta);
        self.transform.analyze(&self.grid, &mut self.stages[out]);
        for (a, on) in self.stages[out].iter_mut().zip(&self.active) {
            *a = if *on { *a * scale } else { Complex64::new(0.0, 0.0) };
        }
    }

    /// Classical RK4 on the active modes; inactive modes are left untouched.
    fn rk4(&mut self, u: &mut SpectralField, h: f64) {
        // stages: state, trial point, slope, accumulator.
        let zero = Complex64::new(0.0, 0.0);
        for ((s, a), on) in self.stages[0].iter_mut().zip(u.coeffs()).zip(&self.active) {
            *s = if *on { *a } else { zero };
        }
        {
            let [state, trial, _, acc] = &mut self.stages;
            acc.copy_from_slice(state);
            trial.copy_from_slice(state);
        }
        let weights = [h / 6.0, h / 3.0, h / 3.0, h / 6.0];
        let advance = [h / 2.0, h / 2.0, h, 0.0];
        // Trial point lives in stages[1], slope in stages[2].
        for k in 0..4 {
            self.field(1, 2);
            let [state, trial, slope, acc] = &mut self.stages;
            for i in 0..state.len() {
                acc[i] += slope[i] * weights[k];
                trial[i] = state[i] + slope[i] * advance[k];
            }
        }
        for ((a, s), on) in u.coeffs_mut().iter_mut().zip(&self.stages[3]).zip(&self.active) {
            if *on {
                *a = *s;
            }
        }
    }
}

/// `a_n ↦ e^{-itω_n} a_n`; preserves every `|a_n|`.
pub fn linear_substep(u: &SpectralField, t: f64, cfg: &FlowConfig) -> SpectralField {
    let mut out = u.clone();
    for (a, nsq) in out.coeffs_mut().iter_mut().zip(u.geometry().norm_sq_table()) {
        *a *= Complex64::from_polar(1.0, -t * cfg.symbol.omega(nsq, cfg.params.alpha));
    }
    out
}

/// Exact pointwise phase `u(x) ↦ e^{-2iγβ t e^{β|u(x)|²}} u(x)` on a collocation grid.
pub fn nonlinear_substep_collocation(u: &SpectralField, t: f64, params: &ModelParams) -> Result<SpectralField> {
    let geometry = with_field_geometry(params, u)?;
    let cfg = FlowConfig::new(params_on(params, geometry), 1.0, 0.0);
    let mut stepper = Stepper::new(cfg, FlowMode::Collocation)?;
    let mut out = u.clone();
    stepper.nonlinear(&mut out, t);
    Ok(out)
}

/// RK4 integration of `i ∂_t a = 2γβ Π_{≤N}[e^{β|Π_N u|²} Π_N u]` with `substeps` steps.
pub fn nonlinear_substep_galerkin(
    u: &SpectralField,
    t: f64,
    params: &ModelParams,
    substeps: usize,
) -> Result<SpectralField> {
    let geometry = with_field_geometry(params, u)?;
    let mut cfg = FlowConfig::new(params_on(params, geometry), 1.0, 0.0);
    cfg.nonlinear_substeps = substeps;
    let mut stepper = Stepper::new(cfg, FlowMode::Galerkin)?;
    let mut out = u.clone();
    stepper.nonlinear(&mut out, t);
    Ok(out)
}

fn with_field_geometry(params: &ModelParams, u: &SpectralField) -> Result<TorusGeometry> {
    if params.geometry != *u.geometry() {
        return Err(Error::GeometryMismatch(format!("{:?} vs {:?}", params.geometry, u.geometry())));
    }
    Ok(params.geometry)
}

fn params_on(params: &ModelParams, geometry: TorusGeometry) -> ModelParams {
    ModelParams { geometry, ..*params }
}

/// Diagnostics recorded after every macro step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub mass: f64,
    pub hamiltonian: f64,
    pub potential: f64,
    pub h_s_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub snapshots: Vec<(f64, SpectralField)>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn final_state(&self) -> &SpectralField {
        &self.snapshots.last().expect("trajectory always holds the initial state").1
    }

    pub fn relative_mass_drift(&self) -> f64 {
        relative_drift(self.records.iter().map(|r| r.mass))
    }

    pub fn relative_hamiltonian_drift(&self) -> f64 {
        relative_drift(self.records.iter().map(|r| r.hamiltonian))
    }

    /// CSV with header `t,mass,hamiltonian,potential,h_s_norm`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        for r in &self.records {
            csv.serialize(r)?;
        }
        csv.flush()?;
        Ok(())
    }
}

fn relative_drift(values: impl Iterator<Item = f64>) -> f64 {
    let mut values = values.peekable();
    let first = match values.peek() {
        Some(v) => *v,
        None => return 0.0,
    };
    let scale = first.abs().max(f64::MIN_POSITIVE);
    values.map(|v| (v - first).abs() / scale).fold(0.0, f64::max)
}

/// Integrates `u0` to `cfg.t_final`, recording diagnostics at every macro step.
pub fn evolve(u0: &SpectralField, cfg: &FlowConfig, mode: FlowMode) -> Result<Trajectory> {
    let geometry = with_field_geometry(&cfg.params, u0)?;
    let mut stepper = Stepper::new(FlowConfig { params: params_on(&cfg.params, geometry), ..*cfg }, mode)?;
    let (steps, dt) = cfg.steps();
    let mut u = u0.clone();
    let mut records = Vec::with_capacity(steps + 1);
    let mut snapshots = vec![(0.0, u.clone())];
    records.push(stepper.diagnostics(0.0, &u));
    for k in 1..=steps {
        stepper.step(&mut u, dt);
        let t = if k == steps { cfg.t_final } else { k as f64 * dt };
        records.push(stepper.diagnostics(t, &u));
        if k == steps || (cfg.snapshot_stride > 0 && k % cfg.snapshot_stride == 0) {
            snapshots.push((t, u.clone()));
        }
    }
    Ok(Trajectory { records, snapshots })
}

/// Final state of the flow over signed time `t`, without diagnostics.
pub fn propagate(u0: &SpectralField, t: f64, cfg: &FlowConfig, mode: FlowMode) -> Result<SpectralField> {
    let mut stepper = Stepper::new(*cfg, mode)?;
    with_field_geometry(&cfg.params, u0)?;
    let steps = (t.abs() / cfg.dt).round().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut u = u0.clone();
    if t != 0.0 {
        for _ in 0..steps {
            stepper.step(&mut u, dt);
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::log_log_slope;
    use crate::torus::{project_high, to_grid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params(n: usize, beta: f64, gamma: f64) -> ModelParams {
        ModelParams::new(2.0, beta, gamma, n, TorusGeometry::new(1, n, 4.0).unwrap()).unwrap()
    }

    fn smooth_datum(g: TorusGeometry) -> SpectralField {
        SpectralField::from_modes(g, [([0, 0], c(1.0, 0.0)), ([1, 0], c(0.5, 0.2)), ([-2, 0], c(0.0, 0.3))]).unwrap()
    }

    #[test]
    fn linear_substep_examples() {
        let p = params(8, 0.5, 1.0);
        let mut cfg = FlowConfig::new(p, 1e-3, 1.0);
        cfg.symbol = DispersionSymbol::Pure;
        let u = smooth_datum(p.geometry);
        let back = linear_substep(&u, 2.0 * PI, &cfg);
        for (a, b) in u.coeffs().iter().zip(back.coeffs()) {
            assert!((a - b).norm() < 1e-12);
        }
        let moved = linear_substep(&u, 0.37, &cfg);
        assert_eq!(moved.coeff([0, 0]), u.coeff([0, 0]));
        for (a, b) in u.coeffs().iter().zip(moved.coeffs()) {
            assert!((a.norm() - b.norm()).abs() <= 1e-15);
        }
    }

    #[test]
    fn collocation_constant_field() {
        let g = TorusGeometry::collocation(1, 8).unwrap();
        let p = ModelParams::new(2.0, 1.0, 1.0, 8, g).unwrap();
        // u ≡ 1 has a_0 = (2π)^{1/2}.
        let u = SpectralField::from_modes(g, [([0, 0], c((2.0 * PI).sqrt(), 0.0))]).unwrap();
        let t = 0.3;
        let out = nonlinear_substep_collocation(&u, t, &p).unwrap();
        let expected = Complex64::from_polar(1.0, -2.0 * std::f64::consts::E * t);
        for v in to_grid(&out).values() {
            assert!((v - expected).norm() < 1e-12);
        }
        let zero_gamma = nonlinear_substep_collocation(&u, t, &p.with_gamma(0.0)).unwrap();
        assert_eq!(zero_gamma, u);
    }

    #[test]
    fn collocation_requires_matching_grid() {
        let p = params(8, 1.0, 1.0);
        let u = smooth_datum(p.geometry);
        assert!(matches!(nonlinear_substep_collocation(&u, 0.1, &p), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn collocation_preserves_modulus_and_mass() {
        let g = TorusGeometry::collocation(1, 8).unwrap();
        let p = ModelParams::new(2.0, 0.5, 1.0, 8, g).unwrap();
        let u = smooth_datum(g);
        let out = nonlinear_substep_collocation(&u, 0.7, &p).unwrap();
        for (a, b) in to_grid(&u).values().iter().zip(to_grid(&out).values()) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
        assert_relative_eq!(u.l2_norm_sq(), out.l2_norm_sq(), max_relative = 1e-13);
        assert_relative_eq!(
            crate::measures::potential(&u, 0.5),
            crate::measures::potential(&out, 0.5),
            max_relative = 1e-13
        );
    }

    #[test]
    fn galerkin_constant_field_matches_closed_form() {
        let p = params(4, 1.0, 1.0);
        let u = SpectralField::from_modes(p.geometry, [([0, 0], c(0.8, 0.1))]).unwrap();
        let t = 0.05;
        let out = nonlinear_substep_galerkin(&u, t, &p, 16).unwrap();
        let amp = u.coeff([0, 0]).norm_sqr() / (2.0 * PI);
        let expected = u.coeff([0, 0]) * Complex64::from_polar(1.0, -2.0 * t * amp.exp());
        assert!((out.coeff([0, 0]) - expected).norm() < 1e-10);
        for (i, a) in out.coeffs().iter().enumerate() {
            if p.geometry.frequency(i) != [0, 0] {
                assert!(a.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn galerkin_leaves_high_modes_bitwise() {
        let g = TorusGeometry::new(1, 12, 4.0).unwrap();
        let p = ModelParams::new(2.0, 0.5, 1.0, 4, g).unwrap();
        let mut u = smooth_datum(g);
        u.coeffs_mut()[g.index_of([7, 0]).unwrap()] = c(0.3, -0.4);
        u.coeffs_mut()[g.index_of([-12, 0]).unwrap()] = c(0.1, 0.2);
        let out = nonlinear_substep_galerkin(&u, 0.5, &p, 4).unwrap();
        assert_eq!(project_high(&out, 4), project_high(&u, 4));
        assert!((out.coeff([1, 0]) - u.coeff([1, 0])).norm() > 1e-3);
    }

    #[test]
    fn galerkin_mass_drift_is_fourth_order() {
        let p = params(8, 0.5, 1.0);
        let u = smooth_datum(p.geometry).scaled(c(1.5, 0.0));
        let drift = |substeps: usize| {
            let out = nonlinear_substep_galerkin(&u, 1.0, &p, substeps).unwrap();
            (out.l2_norm_sq() - u.l2_norm_sq()).abs()
        };
        let (a, b) = (drift(8), drift(16));
        let ratio = a / b;
        assert!(ratio > 12.0, "ratio {ratio}, drifts {a} {b}");
    }

    #[test]
    fn zero_coupling_is_linear_flow() {
        let p = params(8, 0.5, 0.0);
        let cfg = FlowConfig::new(p, 1e-2, 1.0);
        let u = smooth_datum(p.geometry);
        let traj = evolve(&u, &cfg, FlowMode::Galerkin).unwrap();
        let exact = linear_substep(&u, 1.0, &cfg);
        for (a, b) in traj.final_state().coeffs().iter().zip(exact.coeffs()) {
            assert!((a - b).norm() < 1e-13);
        }
        for (a, b) in traj.final_state().coeffs().iter().zip(u.coeffs()) {
            assert!((a.norm() - b.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn conservation_short_run() {
        let p = params(16, 0.5, 1.0);
        let cfg = FlowConfig::new(p, 1e-3, 1.0);
        let traj = evolve(&smooth_datum(p.geometry), &cfg, FlowMode::Galerkin).unwrap();
        assert!(traj.relative_mass_drift() <= 1e-11);
        assert!(traj.relative_hamiltonian_drift() <= 1e-6);
        let times = traj.times();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*times.last().unwrap(), 1.0);
    }

    #[test]
    fn hamiltonian_drift_is_second_order() {
        let p = params(16, 0.5, 1.0);
        let u = smooth_datum(p.geometry);
        let dts = [8e-3, 4e-3, 2e-3];
        let drifts: Vec<f64> = dts
            .iter()
            .map(|&dt| {
                evolve(&u, &FlowConfig::new(p, dt, 1.0), FlowMode::Galerkin).unwrap().relative_hamiltonian_drift()
            })
            .collect();
        let slope = log_log_slope(&dts, &drifts);
        assert!((1.8..=2.2).contains(&slope), "slope {slope} from {drifts:?}");
    }

    #[test]
    fn collocation_evolve_conserves_mass() {
        let g = TorusGeometry::collocation(1, 16).unwrap();
        let p = ModelParams::new(2.0, 0.5, 1.0, 16, g).unwrap();
        let traj = evolve(&smooth_datum(g), &FlowConfig::new(p, 1e-3, 0.5), FlowMode::Collocation).unwrap();
        assert!(traj.relative_mass_drift() <= 1e-12);
        assert!(traj.relative_hamiltonian_drift() <= 1e-5);
    }

    #[test]
    fn lie_scheme_is_first_order() {
        let p = params(8, 0.5, 1.0);
        let u = smooth_datum(p.geometry);
        let reference = propagate(&u, 0.5, &FlowConfig::new(p, 1e-4, 0.5), FlowMode::Galerkin).unwrap();
        let err = |dt: f64| {
            let mut cfg = FlowConfig::new(p, dt, 0.5);
            cfg.scheme = Scheme::Lie;
            propagate(&u, 0.5, &cfg, FlowMode::Galerkin).unwrap().sub(&reference).unwrap().l2_norm()
        };
        let slope = log_log_slope(&[1e-2, 5e-3], &[err(1e-2), err(5e-3)]);
        assert!((0.8..1.2).contains(&slope), "slope {slope}");
    }

    #[test]
    fn trajectory_csv_layout() {
        let p = params(4, 0.5, 1.0);
        let traj = evolve(&smooth_datum(p.geometry), &FlowConfig::new(p, 0.1, 0.2), FlowMode::Galerkin).unwrap();
        let mut out = Vec::new();
        traj.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,mass,hamiltonian,potential,h_s_norm");
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn evolve_rejects_bad_config() {
        let p = params(4, 0.5, 1.0);
        let u = smooth_datum(p.geometry);
        assert!(evolve(&u, &FlowConfig::new(p, 0.0, 1.0), FlowMode::Galerkin).is_err());
        assert!(evolve(&u, &FlowConfig::new(p, 0.1, -1.0), FlowMode::Galerkin).is_err());
        let mut cfg = FlowConfig::new(p, 0.1, 1.0);
        cfg.nonlinear_substeps = 0;
        assert!(evolve(&u, &cfg, FlowMode::Galerkin).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn strang_is_time_reversible(
            re in proptest::collection::vec(-1.0f64..1.0, 5),
            im in proptest::collection::vec(-1.0f64..1.0, 5),
            t in 0.05f64..1.0,
        ) {
            let p = params(4, 0.5, 1.0);
            let g = p.geometry;
            let mut u = SpectralField::zeros(g);
            for k in 0..5 {
                let idx = g.index_of([k as i64 - 2, 0]).unwrap();
                u.coeffs_mut()[idx] = c(re[k], im[k]);
            }
            let cfg = FlowConfig::new(p, 1e-3, t);
            let forward = propagate(&u, t, &cfg, FlowMode::Galerkin).unwrap();
            let back = propagate(&forward, -t, &cfg, FlowMode::Galerkin).unwrap();
            prop_assert!(back.sub(&u).unwrap().l2_norm() <= 1e-9);
        }

        #[test]
        fn galerkin_high_modes_follow_linear_flow(seed in 0u64..1000) {
            let g = TorusGeometry::new(1, 10, 3.0).unwrap();
            let p = ModelParams::new(2.0, 0.3, 1.0, 4, g).unwrap();
            let u = crate::measures::sample_gaussian(&p.with_cutoff(10), &crate::measures::RngStream::new(seed, 0));
            let cfg = FlowConfig::new(p, 1e-2, 0.3);
            let out = propagate(&u, 0.3, &cfg, FlowMode::Galerkin).unwrap();
            let linear = linear_substep(&project_high(&u, 4), 0.3, &cfg);
            let high = project_high(&out, 4);
            for (a, b) in high.coeffs().iter().zip(linear.coeffs()) {
                prop_assert!((a - b).norm() <= 1e-14);
            }
        }
    }
}
