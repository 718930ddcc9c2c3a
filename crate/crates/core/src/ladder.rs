//! Fixed lattices of candidate constants and exponents.
//!
//! Every "there exist constants such that ..." statement is checked by
//! reporting the minimal lexicographic witness on one of these ladders.

use serde::{Deserialize, Serialize};

/// `{2^k : lo ≤ k ≤ hi}`.
pub fn pow2_ladder(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(k)).collect()
}

/// `{0, step, 2·step, …, max}`.
pub fn linear_ladder(step: f64, max: f64) -> Vec<f64> {
    let count = (max / step).round() as usize;
    (0..=count).map(|k| k as f64 * step).collect()
}

/// Smallest ladder entry `≥ required`.
pub fn smallest_at_least(ladder: &[f64], required: f64) -> Option<f64> {
    ladder.iter().copied().find(|&c| required <= c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladders {
    /// Growth exponents ϑ, searched ascending.
    pub exponents: Vec<f64>,
    /// Constants C, searched ascending.
    pub constants: Vec<f64>,
}

impl Default for Ladders {
    fn default() -> Self {
        Ladders {
            exponents: linear_ladder(0.5, 8.0),
            constants: pow2_ladder(0, 20),
        }
    }
}

/// One instance of `value ≤ C · base^ϑ` with `base ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub base: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub exponent: f64,
    pub constant: f64,
    /// `max value / base^ϑ` at the chosen exponent.
    pub measured: f64,
    /// Sample attaining `measured`.
    pub witness: usize,
}

/// Minimal lexicographic `(ϑ, C)` with `value ≤ C·base^ϑ` for all samples.
///
/// On failure returns the fit at the largest exponent with the unmet
/// requirement in `measured` and `constant = NaN`.
pub fn fit_exponent(samples: &[Sample], ladders: &Ladders) -> Result<ExponentFit, ExponentFit> {
    let mut last = None;
    for &exponent in &ladders.exponents {
        let (witness, measured) = worst_ratio(samples, exponent);
        if let Some(constant) = smallest_at_least(&ladders.constants, measured) {
            return Ok(ExponentFit {
                exponent,
                constant,
                measured,
                witness,
            });
        }
        last = Some(ExponentFit {
            exponent,
            constant: f64::NAN,
            measured,
            witness,
        });
    }
    Err(last.unwrap_or(ExponentFit {
        exponent: f64::NAN,
        constant: f64::NAN,
        measured: f64::NAN,
        witness: 0,
    }))
}

/// `max_i value_i / base_i^ϑ` and its argmax (0 for an empty sample set).
pub fn worst_ratio(samples: &[Sample], exponent: f64) -> (usize, f64) {
    let mut best = (0usize, 0.0f64);
    for (i, s) in samples.iter().enumerate() {
        if s.value <= 0.0 {
            continue;
        }
        let r = s.value / s.base.powf(exponent);
        if r > best.1 {
            best = (i, r);
        }
    }
    best
}
