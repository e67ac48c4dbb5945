use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::smooth_cutoff;
use crate::{Error, Result};

/// Spectral truncation level for lattice sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cutoff {
    Finite(usize),
    Infinite,
}

/// Pointwise variance `σ_{α,N} = (2π)^{-d} Σ_{|n| ≤ N} ⟨n⟩^{-α}` of the truncated Gaussian field.
///
/// The infinite sum requires `α > d`. It is evaluated as a smoothly truncated
/// lattice sum plus the matching radial integral; by Poisson summation the
/// remainder is smaller than any power of the truncation radius.
pub fn sigma(alpha: f64, cutoff: Cutoff, dim: usize) -> Result<f64> {
    if dim != 1 && dim != 2 {
        return Err(Error::InvalidGeometry(format!("dimension must be 1 or 2, got {dim}")));
    }
    let total = match cutoff {
        Cutoff::Finite(n) => lattice_sum(n as f64, dim, |r2| (1.0 + r2).powf(-alpha / 2.0)),
        Cutoff::Infinite => {
            if alpha <= dim as f64 {
                return Err(Error::Divergent { alpha, dim });
            }
            bracket_zeta(alpha, dim)
        }
    };
    Ok(total / (2.0 * PI).powi(dim as i32))
}

/// Number of lattice points `n ∈ Z^d` with `|n| ≤ Λ`.
pub fn weyl_count(lambda: f64, dim: usize) -> Result<u64> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be >= 0, got {lambda}")));
    }
    let r = lambda.floor() as i64;
    match dim {
        1 => Ok((2 * r + 1) as u64),
        2 => {
            let limit = lambda * lambda;
            Ok((-r..=r)
                .map(|n1| {
                    let rest = limit - (n1 * n1) as f64;
                    let mut k = rest.max(0.0).sqrt().floor() as i64;
                    while ((k + 1) * (k + 1)) as f64 <= rest {
                        k += 1;
                    }
                    while k > 0 && (k * k) as f64 > rest {
                        k -= 1;
                    }
                    (2 * k + 1) as u64
                })
                .sum())
        }
        _ => Err(Error::InvalidGeometry(format!("dimension must be 1 or 2, got {dim}"))),
    }
}

/// `Σ_{n ∈ Z^d, |n| ≤ radius} f(|n|²)`.
fn lattice_sum(radius: f64, dim: usize, f: impl Fn(f64) -> f64) -> f64 {
    let r = radius.floor() as i64;
    let limit = radius * radius;
    match dim {
        1 => (-r..=r).map(|n| f((n * n) as f64)).sum(),
        _ => {
            let mut total = 0.0;
            for n1 in -r..=r {
                for n2 in -r..=r {
                    let r2 = (n1 * n1 + n2 * n2) as f64;
                    if r2 <= limit {
                        total += f(r2);
                    }
                }
            }
            total
        }
    }
}

/// `Σ_{n ∈ Z^d} (1 + |n|²)^{-α/2}` for `α > d`.
fn bracket_zeta(alpha: f64, dim: usize) -> f64 {
    let s = alpha / 2.0;
    let radius = if dim == 1 { 4000.0 } else { 300.0 };
    let f = |r2: f64| (1.0 + r2).powf(-s);
    let direct = lattice_sum(radius, dim, |r2| f(r2) * smooth_cutoff(r2.sqrt() / radius));

    // Radial integral of f * (1 - chi) over the transition shell, composite Simpson.
    let shell = |r: f64| f(r * r) * (1.0 - smooth_cutoff(r / radius)) * r.powi(dim as i32 - 1);
    let (a, b) = (radius / 2.0, radius);
    let panels = 20_000;
    let h = (b - a) / panels as f64;
    let mut simpson = shell(a) + shell(b);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        simpson += w * shell(a + k as f64 * h);
    }
    simpson *= h / 3.0;

    let surface = if dim == 1 { 2.0 } else { 2.0 * PI };
    direct + surface * (simpson + radial_tail(s, dim, radius))
}

/// `∫_R^∞ r^{d-1} (1 + r²)^{-s} dr` for `s > d/2`.
fn radial_tail(s: f64, dim: usize, radius: f64) -> f64 {
    if dim == 2 {
        return (1.0 + radius * radius).powf(1.0 - s) / (2.0 * (s - 1.0));
    }
    // (1 + r²)^{-s} = r^{-2s} Σ_k binom(-s, k) r^{-2k}, convergent for r > 1.
    let mut total = 0.0;
    let mut coeff = 1.0;
    for k in 0..200 {
        let exponent = 2.0 * s + 2.0 * k as f64 - 1.0;
        let term = coeff * radius.powf(-exponent) / exponent;
        total += term;
        if term.abs() < 1e-18 * total.abs() {
            break;
        }
        coeff *= -(s + k as f64) / (k as f64 + 1.0);
    }
    total
}
