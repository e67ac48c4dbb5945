use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::stats::log_log_slope;
use crate::torus::{sobolev_norm, to_grid, SpectralField, TorusGeometry, DEFAULT_OVERSAMPLING};
use crate::{Error, Result};

/// `f_N(x) = N^{-1/2} π^{-1} Σ_{N<n≤2N} cos(n(x − x0))` stored in the complex basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpField {
    pub field: SpectralField,
    pub scale: usize,
    pub center: f64,
}

pub fn build_bump(scale: usize, center: f64, geometry: TorusGeometry) -> Result<BumpField> {
    if scale == 0 {
        return Err(Error::InvalidParameter("bump scale must be >= 1".into()));
    }
    if geometry.dim() != 1 {
        return Err(Error::InvalidGeometry("bump fields are built on the circle".into()));
    }
    if geometry.n_max() < 2 * scale {
        return Err(Error::InvalidGeometry(format!(
            "bump at scale {scale} needs n_max >= {}, got {}",
            2 * scale,
            geometry.n_max()
        )));
    }
    // cos(n(x − x0))/(π√N) = Σ_± a_{±n} φ_{±n}(x) with a_{±n} = e^{∓inx0}/√(2πN).
    let amplitude = (2.0 * PI * scale as f64).sqrt().recip();
    let modes = ((scale + 1)..=2 * scale).flat_map(|n| {
        let n = n as i64;
        [
            ([n, 0], Complex64::from_polar(amplitude, -(n as f64) * center)),
            ([-n, 0], Complex64::from_polar(amplitude, n as f64 * center)),
        ]
    });
    Ok(BumpField { field: SpectralField::from_modes(geometry, modes)?, scale, center })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpScanRow {
    pub scale: usize,
    pub l2_norm_sq: f64,
    pub sup_norm: f64,
    /// `‖f_N‖_{H^{α/2}}`.
    pub sobolev_norm: f64,
    pub sobolev_ratio: f64,
    /// `min_{|x−x0| ≤ 0.1/N} f_N(x) / N^{1/2}`.
    pub local_min_ratio: f64,
    /// Largest imaginary part on the grid.
    pub imag_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpScan {
    pub alpha: f64,
    pub rows: Vec<BumpScanRow>,
    pub sup_exponent: f64,
    pub sobolev_exponent: f64,
}

/// Norms of `f_N` along a ladder of scales, with fitted log-log exponents.
pub fn bump_norm_scan(ladder: &[usize], alpha: f64) -> Result<BumpScan> {
    if ladder.len() < 2 || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("bump ladder must be strictly increasing with >= 2 points".into()));
    }
    let rows = ladder
        .iter()
        .map(|&n| {
            let geometry = TorusGeometry::new(1, 2 * n, DEFAULT_OVERSAMPLING)?;
            let bump = build_bump(n, 0.0, geometry)?;
            let grid = to_grid(&bump.field);
            let sup_norm = grid.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
            let imag_residual = grid.values().iter().map(|v| v.im.abs()).fold(0.0, f64::max);
            let sobolev = sobolev_norm(&bump.field, alpha / 2.0);
            let root = (n as f64).sqrt();
            let radius = 0.1 / n as f64;
            let local_min_ratio = (-10..=10)
                .map(|j| bump.field.eval([radius * j as f64 / 10.0, 0.0]).re / root)
                .fold(f64::INFINITY, f64::min);
            Ok(BumpScanRow {
                scale: n,
                l2_norm_sq: bump.field.l2_norm_sq(),
                sup_norm,
                sobolev_norm: sobolev,
                sobolev_ratio: sobolev / (n as f64).powf(alpha / 2.0),
                local_min_ratio,
                imag_residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ns: Vec<f64> = rows.iter().map(|r| r.scale as f64).collect();
    let sups: Vec<f64> = rows.iter().map(|r| r.sup_norm).collect();
    let sobolevs: Vec<f64> = rows.iter().map(|r| r.sobolev_norm).collect();
    Ok(BumpScan {
        alpha,
        sup_exponent: log_log_slope(&ns, &sups),
        sobolev_exponent: log_log_slope(&ns, &sobolevs),
        rows,
    })
}
