use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::measures::{sample_gaussian_with, Evaluator, ModelParams, RngStream};
use crate::stats::{mean_estimate, normal_upper_tail};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub clip: f64,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceScan {
    pub gamma: f64,
    pub mass_cutoff: f64,
    pub rows: Vec<DivergenceRow>,
    /// Fraction of draws with `‖u‖ ≤ K`.
    pub acceptance: f64,
    /// Largest one-sided p-value of "the next ladder point is larger".
    pub trend_pvalue: f64,
    pub diverging: bool,
    /// Last two ladder points within one standard error.
    pub saturated: bool,
}

/// One-sided paired test that each column exceeds the previous one.
///
/// Returns the largest p-value over consecutive pairs; identical columns give 1.
pub fn paired_trend_pvalue(columns: &[Vec<f64>]) -> f64 {
    columns
        .windows(2)
        .map(|w| {
            let diffs: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
            let e = mean_estimate(&diffs);
            if e.stderr == 0.0 || !e.stderr.is_finite() {
                if e.estimate > 0.0 {
                    0.0
                } else {
                    1.0
                }
            } else {
                normal_upper_tail(e.estimate / e.stderr)
            }
        })
        .fold(0.0, f64::max)
}

/// Monte-Carlo `E_μ[e^{−γ min(V_β(Π_N u), L)} 1{‖u‖ ≤ K}]` along a ladder of clips `L`.
///
/// All ladder points reuse the same draws, so the trend test is paired.
pub fn divergence_scan(
    params: &ModelParams,
    mass_cutoff: f64,
    clips: &[f64],
    samples: usize,
    stream: &RngStream,
) -> Result<DivergenceScan> {
    params.validate()?;
    if clips.is_empty() || clips.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::InvalidParameter("clip ladder must be non-empty and positive".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let draws: Vec<(f64, bool)> = (0..samples as u64)
        .into_par_iter()
        .map_init(
            || Evaluator::new(params.geometry),
            |eval, i| {
                let u = sample_gaussian_with(params, &mut stream.substream(i).rng());
                let v = eval.potential(&u, params.beta, Some(params.cutoff));
                (v, u.l2_norm() <= mass_cutoff)
            },
        )
        .collect();
    let columns: Vec<Vec<f64>> = clips
        .iter()
        .map(|&l| {
            draws.iter().map(|&(v, inside)| if inside { (-params.gamma * v.min(l)).exp() } else { 0.0 }).collect()
        })
        .collect();
    let rows: Vec<DivergenceRow> = clips
        .iter()
        .zip(&columns)
        .map(|(&clip, col)| {
            let e = mean_estimate(col);
            DivergenceRow { clip, estimate: e.estimate, stderr: e.stderr }
        })
        .collect();
    let trend_pvalue = paired_trend_pvalue(&columns);
    let saturated = match rows.as_slice() {
        [.., a, b] => (b.estimate - a.estimate).abs() <= a.stderr.max(b.stderr),
        _ => true,
    };
    let acceptance = draws.iter().filter(|d| d.1).count() as f64 / samples as f64;
    Ok(DivergenceScan {
        gamma: params.gamma,
        mass_cutoff,
        rows,
        acceptance,
        trend_pvalue,
        diverging: trend_pvalue < 0.01,
        saturated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::TorusGeometry;

    fn params(gamma: f64) -> ModelParams {
        ModelParams::new(2.0, 0.5, gamma, 4, TorusGeometry::new(1, 4, 4.0).unwrap()).unwrap()
    }

    #[test]
    fn trend_pvalue_cases() {
        let flat = vec![vec![1.0, 2.0, 3.0]; 3];
        assert_eq!(paired_trend_pvalue(&flat), 1.0);
        let up = vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]];
        assert_eq!(paired_trend_pvalue(&up), 0.0);
        let noisy = vec![vec![0.0; 4], vec![1.0, -1.0, 1.0, -1.0]];
        assert!((paired_trend_pvalue(&noisy) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn defocusing_saturates() {
        let scan = divergence_scan(&params(1.0), 3.0, &[10.0, 100.0, 1e3, 1e4], 2000, &RngStream::new(1, 0)).unwrap();
        assert!(scan.saturated);
        assert!(!scan.diverging);
        assert!(scan.rows.windows(2).all(|w| w[1].estimate <= w[0].estimate));
    }

    #[test]
    fn larger_mass_cutoff_increases_focusing_estimate() {
        let stream = RngStream::new(2, 0);
        let small = divergence_scan(&params(-1.0), 1.5, &[10.0, 100.0], 2000, &stream).unwrap();
        let large = divergence_scan(&params(-1.0), 3.0, &[10.0, 100.0], 2000, &stream).unwrap();
        for (a, b) in small.rows.iter().zip(&large.rows) {
            assert!(b.estimate >= a.estimate);
        }
        assert!(large.acceptance >= small.acceptance);
    }
}
