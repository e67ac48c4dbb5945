use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CoeffSequence;
use crate::{Error, Result};

/// Tuple budget for brute-force enumeration.
pub const ENUMERATION_BUDGET: u128 = 100_000_000;

/// How tuples with several odd slots on the output frequency enter `R_{2k+1}`.
///
/// With `m = #{odd j : n_j = n_0}`, a tuple contributes `1` (`Set`),
/// `m(m−1)/2` (`UnorderedPairs`) or `m − 1` (`Excess`) times, for `m ≥ 2`.
/// Only `Excess` makes `(|v|^{2k} − (k+1)𝒜[|v|^{2k}])v = N − R` hold for every `k`;
/// the three coincide for `k = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonantCounting {
    Set,
    UnorderedPairs,
    #[default]
    Excess,
}

impl ResonantCounting {
    fn weight(self, m: usize) -> f64 {
        if m < 2 {
            return 0.0;
        }
        match self {
            ResonantCounting::Set => 1.0,
            ResonantCounting::UnorderedPairs => (m * (m - 1) / 2) as f64,
            ResonantCounting::Excess => (m - 1) as f64,
        }
    }
}

/// Order `k` of a `(2k+1)`-linear form with alternating signs.
///
/// Slot `j = 1..=2k+1` enters unconjugated with sign `+` when `j` is odd and
/// conjugated with sign `−` when even; `flipped` swaps the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultilinearSpec {
    pub k: usize,
    pub flipped: bool,
    pub counting: ResonantCounting,
}

impl MultilinearSpec {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("interaction order k must be >= 1".into()));
        }
        Ok(Self { k, flipped: false, counting: ResonantCounting::default() })
    }

    pub fn arity(&self) -> usize {
        2 * self.k + 1
    }

    /// `ι_j` for `j = 0..=2k+1`; `ι_0` belongs to the output frequency.
    pub fn signs(&self) -> Vec<i64> {
        let flip = if self.flipped { -1 } else { 1 };
        (0..=self.arity())
            .map(|j| {
                if j == 0 {
                    -1
                } else if j % 2 == 1 {
                    flip
                } else {
                    -flip
                }
            })
            .collect()
    }
}

/// Non-resonant and resonant parts of one multilinear form.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilinearForms {
    pub non_resonant: CoeffSequence,
    pub resonant: CoeffSequence,
}

/// Enumerates all tuples `(n_1, …, n_{2k+1})` over the input supports and splits the
/// output `Σ_{Σ ι_j n_j = n_0} Π c^{(j)}` by resonance.
pub fn multilinear_forms(spec: &MultilinearSpec, inputs: &[&CoeffSequence]) -> Result<MultilinearForms> {
    if inputs.len() != spec.arity() {
        return Err(Error::InvalidParameter(format!("expected {} inputs, got {}", spec.arity(), inputs.len())));
    }
    let signs = spec.signs();
    let supports: Vec<Vec<(i64, Complex64)>> = inputs
        .iter()
        .zip(&signs[1..])
        .map(|(c, &s)| c.support().into_iter().map(|(n, a)| (n, if s < 0 { a.conj() } else { a })).collect())
        .collect();
    let tuples = supports.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128));
    if tuples > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded { tuples, budget: ENUMERATION_BUDGET });
    }
    let reach: i64 = inputs.iter().map(|c| c.n_max() as i64).sum();
    let len = (2 * reach + 1) as usize;
    let empty = || (vec![Complex64::new(0.0, 0.0); len], vec![Complex64::new(0.0, 0.0); len]);
    if tuples == 0 {
        let (n, r) = empty();
        return Ok(MultilinearForms {
            non_resonant: CoeffSequence::from_vec(reach as usize, n)?,
            resonant: CoeffSequence::from_vec(reach as usize, r)?,
        });
    }
    // Partition by the first slot; partial sums are reduced in slot order.
    let partials: Vec<(Vec<Complex64>, Vec<Complex64>)> = supports[0]
        .par_iter()
        .map(|&(n1, c1)| {
            let (mut non_res, mut res) = empty();
            let mut freq = vec![0i64; spec.arity()];
            let mut idx = vec![0usize; spec.arity()];
            freq[0] = n1;
            loop {
                let mut product = c1;
                let mut n0 = signs[1] * n1;
                for j in 1..spec.arity() {
                    let (n, c) = supports[j][idx[j]];
                    freq[j] = n;
                    product *= c;
                    n0 += signs[j + 1] * n;
                }
                let m = (0..spec.arity()).step_by(2).filter(|&j| freq[j] == n0).count();
                let slot = (n0 + reach) as usize;
                if m == 0 {
                    non_res[slot] += product;
                } else {
                    res[slot] += product * spec.counting.weight(m);
                }
                // Odometer over slots 2..=2k+1.
                let mut j = spec.arity() - 1;
                loop {
                    if j == 0 {
                        return (non_res, res);
                    }
                    idx[j] += 1;
                    if idx[j] < supports[j].len() {
                        break;
                    }
                    idx[j] = 0;
                    j -= 1;
                }
            }
        })
        .collect();
    let (mut non_res, mut res) = empty();
    for (n, r) in partials {
        for i in 0..len {
            non_res[i] += n[i];
            res[i] += r[i];
        }
    }
    Ok(MultilinearForms {
        non_resonant: CoeffSequence::from_vec(reach as usize, non_res)?,
        resonant: CoeffSequence::from_vec(reach as usize, res)?,
    })
}

pub fn multilinear_n(spec: &MultilinearSpec, inputs: &[&CoeffSequence]) -> Result<CoeffSequence> {
    Ok(multilinear_forms(spec, inputs)?.non_resonant)
}

pub fn multilinear_r(spec: &MultilinearSpec, inputs: &[&CoeffSequence]) -> Result<CoeffSequence> {
    Ok(multilinear_forms(spec, inputs)?.resonant)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    pub max_error: f64,
    /// `(Σ|c_n|)^{2k+1}`, a bound on every coefficient of either side.
    pub scale: f64,
    pub relative_error: f64,
}

/// Compares `(|v|^{2k} − (k+1)𝒜[|v|^{2k}]) v`, computed by coefficient convolution,
/// with `N_{2k+1}(v) − R_{2k+1}(v)` from tuple enumeration.
pub fn decomposition_check(k: usize, v: &CoeffSequence, counting: ResonantCounting) -> Result<DecompositionCheck> {
    let spec = MultilinearSpec { counting, ..MultilinearSpec::new(k)? };
    let inputs = vec![v; spec.arity()];
    let forms = multilinear_forms(&spec, &inputs)?;
    let power = v.modulus_power(k);
    let mean = power.mean();
    let lhs = power.convolve(v).sub(&v.scaled(mean * (k as f64 + 1.0)));
    let rhs = forms.non_resonant.sub(&forms.resonant);
    let max_error = lhs.sub(&rhs).coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let scale = v.coeffs().iter().map(|c| c.norm()).sum::<f64>().powi(spec.arity() as i32);
    let relative_error = if scale > 0.0 { max_error / scale } else { max_error };
    Ok(DecompositionCheck { max_error, scale, relative_error })
}
