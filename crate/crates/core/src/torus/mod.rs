//! Flat torus `T^d = [0, 2π)^d` for `d ∈ {1, 2}`: geometry, spectral and
//! grid representations, projectors, Sobolev norms and spectral sums.
//!
//! Spectral coefficients are taken against the orthonormal basis
//! `φ_n(x) = (2π)^{-d/2} e^{i n·x}`, so `‖u‖²_{L²} = Σ |a_n|²`. Storage is the
//! box `|n|_∞ ≤ N_max` in lexicographic order (first axis slowest), while the
//! sharp projector uses the Euclidean length `|n|`.

mod snapshot;
mod sums;
mod transform;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use sums::{sigma, weyl_count, Cutoff};
pub use transform::FourierTransform;

/// Default ratio between the collocation grid and the retained band.
pub const DEFAULT_OVERSAMPLING: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGeometry {
    dim: usize,
    n_max: usize,
    grid: usize,
}

impl TorusGeometry {
    /// Geometry whose grid holds `ceil(oversampling * (2 n_max + 1))` points per axis.
    pub fn new(dim: usize, n_max: usize, oversampling: f64) -> Result<Self> {
        if !(oversampling.is_finite() && oversampling >= 1.0) {
            return Err(Error::InvalidGeometry(format!("oversampling must be >= 1, got {oversampling}")));
        }
        let band = 2 * n_max + 1;
        let grid = (oversampling * band as f64 - 1e-9).ceil() as usize;
        Self::with_grid(dim, n_max, grid.max(band))
    }

    pub fn with_grid(dim: usize, n_max: usize, grid: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGeometry(format!("dimension must be 1 or 2, got {dim}")));
        }
        if grid < 2 * n_max + 1 {
            return Err(Error::InvalidGeometry(format!("grid of {grid} points cannot represent |n| <= {n_max}")));
        }
        Ok(Self { dim, n_max, grid })
    }

    /// Grid with exactly one point per retained frequency (`M = 2 N_max + 1`).
    ///
    /// Coefficients and grid values are then in bijection, which the
    /// collocation flow relies on.
    pub fn collocation(dim: usize, n_max: usize) -> Result<Self> {
        Self::with_grid(dim, n_max, 2 * n_max + 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Collocation points per axis.
    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn oversampling(&self) -> f64 {
        self.grid as f64 / (2 * self.n_max + 1) as f64
    }

    pub fn is_collocation(&self) -> bool {
        self.grid == 2 * self.n_max + 1
    }

    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim as i32)
    }

    pub fn modes_per_axis(&self) -> usize {
        2 * self.n_max + 1
    }

    pub fn num_modes(&self) -> usize {
        self.modes_per_axis().pow(self.dim as u32)
    }

    pub fn num_points(&self) -> usize {
        self.grid.pow(self.dim as u32)
    }

    /// Quadrature weight of one grid cell, `(2π / M)^d`.
    pub fn cell_volume(&self) -> f64 {
        (2.0 * PI / self.grid as f64).powi(self.dim as i32)
    }

    /// Frequency vector of storage slot `idx` (second component is 0 when `d = 1`).
    pub fn frequency(&self, idx: usize) -> [i64; 2] {
        let side = self.modes_per_axis();
        let offset = self.n_max as i64;
        match self.dim {
            1 => [idx as i64 - offset, 0],
            _ => [(idx / side) as i64 - offset, (idx % side) as i64 - offset],
        }
    }

    /// Storage slot of frequency `n`, if it lies inside the box.
    pub fn index_of(&self, n: [i64; 2]) -> Option<usize> {
        let offset = self.n_max as i64;
        let side = self.modes_per_axis();
        let inside = |k: i64| k.abs() <= offset;
        match self.dim {
            1 if n[1] == 0 && inside(n[0]) => Some((n[0] + offset) as usize),
            2 if inside(n[0]) && inside(n[1]) => Some((n[0] + offset) as usize * side + (n[1] + offset) as usize),
            _ => None,
        }
    }

    /// Squared Euclidean length `|n|²` for every storage slot.
    pub fn norm_sq_table(&self) -> Vec<i64> {
        (0..self.num_modes())
            .map(|i| {
                let n = self.frequency(i);
                n[0] * n[0] + n[1] * n[1]
            })
            .collect()
    }

    /// Coordinates of grid point `j` (row-major for `d = 2`).
    pub fn point(&self, j: usize) -> [f64; 2] {
        let h = 2.0 * PI / self.grid as f64;
        match self.dim {
            1 => [j as f64 * h, 0.0],
            _ => [(j / self.grid) as f64 * h, (j % self.grid) as f64 * h],
        }
    }

    pub(crate) fn ensure_same(&self, other: &TorusGeometry) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Japanese bracket `⟨n⟩ = (1 + |n|²)^{1/2}` from the squared length.
#[inline]
pub fn bracket(norm_sq: i64) -> f64 {
    (1.0 + norm_sq as f64).sqrt()
}

/// Complex coefficients `a_n` on the box `|n|_∞ ≤ N_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    geometry: TorusGeometry,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(geometry: TorusGeometry) -> Self {
        Self { geometry, coeffs: vec![Complex64::new(0.0, 0.0); geometry.num_modes()] }
    }

    pub fn from_coeffs(geometry: TorusGeometry, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != geometry.num_modes() {
            return Err(Error::GeometryMismatch(format!(
                "expected {} coefficients, got {}",
                geometry.num_modes(),
                coeffs.len()
            )));
        }
        Ok(Self { geometry, coeffs })
    }

    /// Field with the given `(frequency, coefficient)` entries and zeros elsewhere.
    pub fn from_modes(geometry: TorusGeometry, modes: impl IntoIterator<Item = ([i64; 2], Complex64)>) -> Result<Self> {
        let mut field = Self::zeros(geometry);
        for (n, a) in modes {
            let idx = geometry.index_of(n).ok_or_else(|| {
                Error::InvalidParameter(format!("frequency {n:?} outside |n|_inf <= {}", geometry.n_max))
            })?;
            field.coeffs[idx] = a;
        }
        Ok(field)
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn coeff(&self, n: [i64; 2]) -> Complex64 {
        self.geometry.index_of(n).map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self { geometry: self.geometry, coeffs: self.coeffs.iter().map(|a| a * c).collect() }
    }

    pub fn add(&self, other: &SpectralField) -> Result<Self> {
        self.geometry.ensure_same(&other.geometry)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self { geometry: self.geometry, coeffs })
    }

    pub fn sub(&self, other: &SpectralField) -> Result<Self> {
        self.geometry.ensure_same(&other.geometry)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(Self { geometry: self.geometry, coeffs })
    }

    /// `L²` inner product `⟨u, v⟩ = Σ a_n conj(b_n)`.
    pub fn inner(&self, other: &SpectralField) -> Result<Complex64> {
        self.geometry.ensure_same(&other.geometry)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum())
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// Point evaluation `u(x) = Σ a_n φ_n(x)` without going through the grid.
    pub fn eval(&self, x: [f64; 2]) -> Complex64 {
        let norm = (2.0 * PI).powf(-(self.geometry.dim as f64) / 2.0);
        let sum: Complex64 = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.re != 0.0 || a.im != 0.0)
            .map(|(i, a)| {
                let n = self.geometry.frequency(i);
                a * Complex64::from_polar(1.0, n[0] as f64 * x[0] + n[1] as f64 * x[1])
            })
            .sum();
        sum * norm
    }

    /// Translation `u(· − x0)`, i.e. `a_n ↦ e^{−i n·x0} a_n`.
    pub fn translate(&self, x0: [f64; 2]) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let n = self.geometry.frequency(i);
                a * Complex64::from_polar(1.0, -(n[0] as f64 * x0[0] + n[1] as f64 * x0[1]))
            })
            .collect();
        Self { geometry: self.geometry, coeffs }
    }
}

/// Values on the uniform collocation grid (row-major for `d = 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    geometry: TorusGeometry,
    values: Vec<Complex64>,
}

impl GridField {
    pub fn new(geometry: TorusGeometry, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != geometry.num_points() {
            return Err(Error::GeometryMismatch(format!(
                "expected {} grid values, got {}",
                geometry.num_points(),
                values.len()
            )));
        }
        Ok(Self { geometry, values })
    }

    pub fn from_fn(geometry: TorusGeometry, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        let values = (0..geometry.num_points()).map(|j| f(geometry.point(j))).collect();
        Self { geometry, values }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Rectangle-rule integral over the torus (spectrally accurate for trigonometric polynomials).
    pub fn integrate(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.geometry.cell_volume()
    }

    /// Mean value `(2π)^{-d} ∫ f dx`.
    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.values.len() as f64
    }
}

/// Synthesis `a ↦ u(x_j)` on the geometry's grid.
pub fn to_grid(u: &SpectralField) -> GridField {
    let mut transform = FourierTransform::new(u.geometry);
    let mut values = vec![Complex64::new(0.0, 0.0); u.geometry.num_points()];
    transform.synthesize(&u.coeffs, &mut values);
    GridField { geometry: u.geometry, values }
}

/// Analysis by grid quadrature, keeping only `|n|_∞ ≤ cutoff`.
pub fn from_grid(g: &GridField, cutoff: usize) -> SpectralField {
    let mut transform = FourierTransform::new(g.geometry);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); g.geometry.num_modes()];
    transform.analyze(&g.values, &mut coeffs);
    if cutoff < g.geometry.n_max {
        for (i, a) in coeffs.iter_mut().enumerate() {
            let n = g.geometry.frequency(i);
            if n[0].unsigned_abs() as usize > cutoff || n[1].unsigned_abs() as usize > cutoff {
                *a = Complex64::new(0.0, 0.0);
            }
        }
    }
    SpectralField { geometry: g.geometry, coeffs }
}

/// Sharp projector `Π_{≤N}`: keeps `|n| ≤ N` (Euclidean).
pub fn project(u: &SpectralField, cutoff: usize) -> SpectralField {
    let limit = (cutoff * cutoff) as i64;
    let mut out = u.clone();
    for (a, nsq) in out.coeffs.iter_mut().zip(u.geometry.norm_sq_table()) {
        if nsq > limit {
            *a = Complex64::new(0.0, 0.0);
        }
    }
    out
}

/// Complementary projector `Π_{>N} = 1 − Π_{≤N}`.
pub fn project_high(u: &SpectralField, cutoff: usize) -> SpectralField {
    let limit = (cutoff * cutoff) as i64;
    let mut out = u.clone();
    for (a, nsq) in out.coeffs.iter_mut().zip(u.geometry.norm_sq_table()) {
        if nsq <= limit {
            *a = Complex64::new(0.0, 0.0);
        }
    }
    out
}

/// Smooth projector `χ(−N^{-2}Δ)`: multiplies `a_n` by `χ(|n|²/N²)`.
///
/// `profile` is expected to vanish outside `[-1, 1]` and equal 1 on `[-1/2, 1/2]`.
pub fn smooth_project(u: &SpectralField, cutoff: usize, profile: impl Fn(f64) -> f64) -> SpectralField {
    let scale = (cutoff.max(1) * cutoff.max(1)) as f64;
    let mut out = u.clone();
    for (a, nsq) in out.coeffs.iter_mut().zip(u.geometry.norm_sq_table()) {
        let r = if cutoff == 0 {
            if nsq == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            nsq as f64 / scale
        };
        let w = if r.is_finite() { profile(r) } else { 0.0 };
        *a *= w;
    }
    out
}

/// `C^∞` cutoff equal to 1 on `|r| ≤ 1/2` and 0 on `|r| ≥ 1`.
pub fn smooth_cutoff(r: f64) -> f64 {
    let r = r.abs();
    if r <= 0.5 {
        1.0
    } else if r >= 1.0 {
        0.0
    } else {
        let t = 2.0 * (r - 0.5);
        let h = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
        h(1.0 - t) / (h(1.0 - t) + h(t))
    }
}

/// `‖u‖_{H^s} = (Σ ⟨n⟩^{2s} |a_n|²)^{1/2}`.
pub fn sobolev_norm(u: &SpectralField, s: f64) -> f64 {
    u.coeffs
        .iter()
        .zip(u.geometry.norm_sq_table())
        .map(|(a, nsq)| (1.0 + nsq as f64).powf(s) * a.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(geometry: TorusGeometry, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..geometry.num_modes())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        SpectralField::from_coeffs(geometry, coeffs).unwrap()
    }

    #[test]
    fn geometry_rejects_lossy_grid() {
        assert!(TorusGeometry::with_grid(1, 8, 16).is_err());
        assert!(TorusGeometry::with_grid(3, 8, 64).is_err());
        assert!(TorusGeometry::new(1, 8, 0.5).is_err());
        let g = TorusGeometry::new(1, 8, 4.0).unwrap();
        assert_eq!(g.grid(), 68);
        assert_relative_eq!(g.volume(), 2.0 * PI);
        assert_relative_eq!(TorusGeometry::new(2, 3, 1.0).unwrap().volume(), 4.0 * PI * PI);
    }

    #[test]
    fn index_round_trip() {
        for g in [TorusGeometry::new(1, 5, 2.0).unwrap(), TorusGeometry::new(2, 3, 2.0).unwrap()] {
            for i in 0..g.num_modes() {
                assert_eq!(g.index_of(g.frequency(i)), Some(i));
            }
        }
        let g = TorusGeometry::new(2, 2, 2.0).unwrap();
        assert_eq!(g.frequency(0), [-2, -2]);
        assert_eq!(g.frequency(1), [-2, -1]);
        assert_eq!(g.index_of([3, 0]), None);
    }

    #[test]
    fn constant_mode_synthesizes_to_constant() {
        let g = TorusGeometry::new(1, 4, 2.0).unwrap();
        let u = SpectralField::from_modes(g, [([0, 0], Complex64::new(1.0, 0.0))]).unwrap();
        for v in to_grid(&u).values() {
            assert_relative_eq!(v.re, (2.0 * PI).powf(-0.5), epsilon = 1e-15);
            assert!(v.im.abs() < 1e-15);
        }
    }

    #[test]
    fn first_mode_synthesizes_to_plane_wave() {
        let g = TorusGeometry::new(1, 4, 2.0).unwrap();
        let u = SpectralField::from_modes(g, [([1, 0], Complex64::new(1.0, 0.0))]).unwrap();
        let grid = to_grid(&u);
        for (j, v) in grid.values().iter().enumerate() {
            let x = g.point(j)[0];
            let expected = Complex64::from_polar((2.0 * PI).powf(-0.5), x);
            assert!((v - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        for g in [
            TorusGeometry::new(1, 16, 4.0).unwrap(),
            TorusGeometry::collocation(1, 9).unwrap(),
            TorusGeometry::new(2, 5, 2.0).unwrap(),
            TorusGeometry::collocation(2, 4).unwrap(),
        ] {
            let u = random_field(g, 7);
            let grid = to_grid(&u);
            let back = from_grid(&grid, g.n_max());
            let err = back.sub(&u).unwrap().l2_norm() / u.l2_norm();
            assert!(err < 1e-12, "round trip error {err}");
            let quad: f64 = grid.values().iter().map(|v| v.norm_sqr()).sum::<f64>() * g.cell_volume();
            assert_relative_eq!(quad, u.l2_norm_sq(), max_relative = 1e-10);
        }
    }

    #[test]
    fn from_grid_truncates_box() {
        let g = TorusGeometry::new(2, 4, 2.0).unwrap();
        let u = random_field(g, 3);
        let v = from_grid(&to_grid(&u), 2);
        for i in 0..g.num_modes() {
            let n = g.frequency(i);
            if n[0].abs() > 2 || n[1].abs() > 2 {
                assert_eq!(v.coeffs()[i], Complex64::new(0.0, 0.0));
            } else {
                assert!((v.coeffs()[i] - u.coeffs()[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn eval_matches_grid() {
        let g = TorusGeometry::new(2, 3, 2.0).unwrap();
        let u = random_field(g, 11);
        let grid = to_grid(&u);
        for j in [0, 5, 17, 40] {
            assert!((u.eval(g.point(j)) - grid.values()[j]).norm() < 1e-12);
        }
    }

    #[test]
    fn projector_keeps_zero_mode_only_at_zero_cutoff() {
        let g = TorusGeometry::new(2, 3, 2.0).unwrap();
        let u = random_field(g, 5);
        let p = project(&u, 0);
        for i in 0..g.num_modes() {
            let expected = if g.frequency(i) == [0, 0] { u.coeffs()[i] } else { Complex64::new(0.0, 0.0) };
            assert_eq!(p.coeffs()[i], expected);
        }
    }

    #[test]
    fn projector_uses_euclidean_length() {
        let g = TorusGeometry::new(2, 3, 2.0).unwrap();
        let u = random_field(g, 5);
        let p = project(&u, 2);
        assert_eq!(p.coeff([2, 0]), u.coeff([2, 0]));
        assert_eq!(p.coeff([1, 1]), u.coeff([1, 1]));
        assert_eq!(p.coeff([2, 1]), Complex64::new(0.0, 0.0));
        let sum = p.add(&project_high(&u, 2)).unwrap();
        assert_eq!(sum, u);
    }

    #[test]
    fn smooth_projector_regions() {
        let g = TorusGeometry::new(1, 20, 2.0).unwrap();
        let u = random_field(g, 9);
        let p = smooth_project(&u, 10, smooth_cutoff);
        for i in 0..g.num_modes() {
            let n = g.frequency(i)[0].abs() as f64;
            if n <= 10.0 / 2f64.sqrt() {
                assert_eq!(p.coeffs()[i], u.coeffs()[i]);
            }
            if n > 10.0 {
                assert_eq!(p.coeffs()[i], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn smooth_projection_converges_on_smooth_field() {
        let g = TorusGeometry::new(1, 256, 1.0).unwrap();
        let coeffs = (0..g.num_modes())
            .map(|i| {
                let n = g.frequency(i)[0] as f64;
                Complex64::new((-0.3 * n.abs()).exp(), 0.0)
            })
            .collect();
        let u = SpectralField::from_coeffs(g, coeffs).unwrap();
        // Independent tail: the error is bounded by the mass outside |n| <= N/sqrt(2).
        let mut previous = f64::INFINITY;
        for n in [4usize, 8, 16, 32, 64] {
            let err = smooth_project(&u, n, smooth_cutoff).sub(&u).unwrap().l2_norm();
            let kept = (n as f64 / 2f64.sqrt()).floor() as i64;
            let tail: f64 = u
                .coeffs()
                .iter()
                .enumerate()
                .filter(|(i, _)| g.frequency(*i)[0].abs() > kept)
                .map(|(_, a)| a.norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(err <= tail + 1e-15);
            assert!(err < previous);
            previous = err;
        }
        assert!(previous < 1e-5);
    }

    #[test]
    fn sobolev_norm_examples() {
        let g = TorusGeometry::new(1, 4, 2.0).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let u0 = SpectralField::from_modes(g, [([0, 0], one)]).unwrap();
        for s in [-1.0, 0.0, 0.5, 3.0] {
            assert_relative_eq!(sobolev_norm(&u0, s), 1.0);
        }
        let u1 = SpectralField::from_modes(g, [([1, 0], one)]).unwrap();
        assert_relative_eq!(sobolev_norm(&u1, 1.0), 2f64.sqrt(), max_relative = 1e-15);
        let u = random_field(g, 1);
        assert_relative_eq!(sobolev_norm(&u, 0.0), u.l2_norm(), max_relative = 1e-14);
    }

    #[test]
    fn translate_shifts_point_values() {
        let g = TorusGeometry::new(1, 6, 2.0).unwrap();
        let u = random_field(g, 2);
        let shifted = u.translate([0.7, 0.0]);
        for x in [0.0, 1.3, 4.0] {
            assert!((shifted.eval([x, 0.0]) - u.eval([x - 0.7, 0.0])).norm() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn projector_idempotent_and_self_adjoint(seed in 0u64..1000, cutoff in 0usize..6) {
            let g = TorusGeometry::new(2, 5, 1.5).unwrap();
            let u = random_field(g, seed);
            let v = random_field(g, seed + 10_000);
            let pu = project(&u, cutoff);
            proptest::prop_assert_eq!(project(&pu, cutoff), pu.clone());
            let lhs = pu.inner(&v).unwrap();
            let rhs = u.inner(&project(&v, cutoff)).unwrap();
            proptest::prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
