use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::TorusGeometry;

/// Planned FFT pair between box coefficients and grid values.
///
/// Holds its own scratch space, so hot loops should keep one per worker.
pub struct FourierTransform {
    geometry: TorusGeometry,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    bins: Vec<usize>,
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl FourierTransform {
    pub fn new(geometry: TorusGeometry) -> Self {
        let m = geometry.grid();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let wrap = |k: i64| k.rem_euclid(m as i64) as usize;
        let bins = (0..geometry.num_modes())
            .map(|i| {
                let n = geometry.frequency(i);
                match geometry.dim() {
                    1 => wrap(n[0]),
                    _ => wrap(n[0]) * m + wrap(n[1]),
                }
            })
            .collect();
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self {
            geometry,
            forward,
            inverse,
            bins,
            buffer: vec![Complex64::new(0.0, 0.0); geometry.num_points()],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    /// `values[j] = Σ_n coeffs[n] φ_n(x_j)`.
    pub fn synthesize(&mut self, coeffs: &[Complex64], values: &mut [Complex64]) {
        debug_assert_eq!(coeffs.len(), self.bins.len());
        debug_assert_eq!(values.len(), self.buffer.len());
        values.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (a, &bin) in coeffs.iter().zip(&self.bins) {
            values[bin] = *a;
        }
        let inverse = Arc::clone(&self.inverse);
        self.run(inverse.as_ref(), values);
        let norm = (2.0 * PI).powf(-(self.geometry.dim() as f64) / 2.0);
        values.iter_mut().for_each(|v| *v *= norm);
    }

    /// `coeffs[n] = Σ_j |cell| values[j] conj(φ_n(x_j))`, exact for band-limited data.
    pub fn analyze(&mut self, values: &[Complex64], coeffs: &mut [Complex64]) {
        debug_assert_eq!(coeffs.len(), self.bins.len());
        let mut buffer = std::mem::take(&mut self.buffer);
        buffer.copy_from_slice(values);
        let forward = Arc::clone(&self.forward);
        self.run(forward.as_ref(), &mut buffer);
        let norm = (2.0 * PI).powf(self.geometry.dim() as f64 / 2.0) / self.geometry.num_points() as f64;
        for (a, &bin) in coeffs.iter_mut().zip(&self.bins) {
            *a = buffer[bin] * norm;
        }
        self.buffer = buffer;
    }

    fn run(&mut self, fft: &dyn Fft<f64>, data: &mut [Complex64]) {
        fft.process_with_scratch(data, &mut self.scratch);
        if self.geometry.dim() == 2 {
            let m = self.geometry.grid();
            transpose_square(data, m);
            fft.process_with_scratch(data, &mut self.scratch);
            transpose_square(data, m);
        }
    }
}

fn transpose_square(data: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            data.swap(i * m + j, j * m + i);
        }
    }
}
