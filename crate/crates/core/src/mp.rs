//! Exact reverse water-filling.
//!
//! Given scores `L_1..L_N` and `gamma > 0`, the margin-propagation threshold
//! is the unique `z` with `sum_i max(L_i - z, 0) = gamma`. Sorting the scores
//! in descending order, the candidate for an active set of size `m` is
//! `z_m = (L_(1) + ... + L_(m) - gamma) / m`; the answer is the first `z_m`
//! that is not below the next score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{NoCount, Op, OpSink};

/// Residual tolerance for the water-filling constraint in `f64`.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// A signed quantity carried as a pair of scores, `value = plus - minus`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DifferentialValue {
    pub plus: f64,
    pub minus: f64,
}

pub type DifferentialVector = Vec<DifferentialValue>;

impl DifferentialValue {
    pub const fn new(plus: f64, minus: f64) -> Self {
        Self { plus, minus }
    }

    /// Encodes `v` in `[0, 1]` as `(v, 1 - v)`.
    pub fn from_unit(v: f64) -> Self {
        Self::new(v, 1.0 - v)
    }

    pub fn value(&self) -> f64 {
        self.plus - self.minus
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.minus, self.plus)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.plus >= -tol && self.minus >= -tol && (self.plus + self.minus - 1.0).abs() <= tol
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpResult {
    pub z: f64,
    /// Indices with `L_i > z`, ascending.
    pub active: Vec<usize>,
    pub a_count: usize,
}

fn validate(scores: &[f64], gamma: f64) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if !(gamma > 0.0) {
        return Err(Error::NonPositiveGamma(gamma));
    }
    if let Some((index, &value)) = scores.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteScore { index, value });
    }
    Ok(())
}

/// Threshold only. Inputs must already be validated.
pub(crate) fn threshold<S: OpSink>(scores: &[f64], gamma: f64, sink: &mut S) -> f64 {
    let n = scores.len();
    if n == 1 {
        sink.record(Op::SolverAdd, 1);
        return scores[0] - gamma;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| {
        sink.record(Op::Compare, 1);
        b.total_cmp(a)
    });
    let mut prefix = 0.0;
    for m in 1..=n {
        prefix += sorted[m - 1];
        sink.record(Op::SolverAdd, 2);
        sink.record(Op::Division, 1);
        let z = (prefix - gamma) / m as f64;
        if m == n {
            return z;
        }
        sink.record(Op::Compare, 1);
        if z >= sorted[m] {
            return z;
        }
    }
    unreachable!("loop returns at m == n")
}

/// Threshold and active count without materializing the active set.
pub(crate) fn threshold_count<S: OpSink>(scores: &[f64], gamma: f64, sink: &mut S) -> (f64, usize) {
    let z = threshold(scores, gamma, sink);
    sink.record(Op::Compare, scores.len() as u64);
    let count = scores.iter().filter(|&&l| l > z).count();
    sink.mp_call(scores.len(), count);
    (z, count)
}

/// Solves `sum_i [L_i - z]_+ = gamma` exactly.
pub fn mp(scores: &[f64], gamma: f64) -> Result<MpResult> {
    mp_traced(scores, gamma, &mut NoCount)
}

pub fn mp_traced<S: OpSink>(scores: &[f64], gamma: f64, sink: &mut S) -> Result<MpResult> {
    validate(scores, gamma)?;
    let z = threshold(scores, gamma, sink);
    sink.record(Op::Compare, scores.len() as u64);
    let active: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > z).collect();
    sink.mp_call(scores.len(), active.len());
    let a_count = active.len();
    Ok(MpResult { z, active, a_count })
}

/// `dz/dL_i = 1(L_i > z) / A`.
pub fn mp_grad(scores: &[f64], result: &MpResult) -> Vec<f64> {
    let inv = 1.0 / result.a_count as f64;
    scores
        .iter()
        .map(|&l| if l > result.z { inv } else { 0.0 })
        .collect()
}

/// Derivative of `[L_d - z]_+` with respect to `L_d`: `(1 - 1/A) 1(L_d > z)`.
pub fn rectified_grad(scores: &[f64], result: &MpResult, d: usize) -> Result<f64> {
    let l = *scores.get(d).ok_or(Error::IndexOutOfRange {
        index: d,
        len: scores.len(),
    })?;
    Ok(if l > result.z {
        1.0 - 1.0 / result.a_count as f64
    } else {
        0.0
    })
}

/// Differential output step: `z = MP({z+, z-}, 1)`, `p± = [z± - z]_+`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalized {
    pub p_plus: f64,
    pub p_minus: f64,
    pub z: f64,
    /// Number of `{z+, z-}` above `z` (1 or 2).
    pub a_count: usize,
}

pub fn output_normalize(z_plus: f64, z_minus: f64) -> Normalized {
    output_normalize_traced(z_plus, z_minus, &mut NoCount)
}

pub fn output_normalize_traced<S: OpSink>(z_plus: f64, z_minus: f64, sink: &mut S) -> Normalized {
    let pair = [z_plus, z_minus];
    let (z, a_count) = threshold_count(&pair, 1.0, sink);
    sink.record(Op::SolverAdd, 2);
    let p_plus = (z_plus - z).max(0.0);
    let p_minus = (z_minus - z).max(0.0);
    debug_assert!(
        (p_plus + p_minus - 1.0).abs() <= RESIDUAL_TOL,
        "normalized pair ({p_plus}, {p_minus}) does not sum to 1"
    );
    Normalized {
        p_plus,
        p_minus,
        z,
        a_count,
    }
}

/// Constraint residual `sum_i [L_i - z]_+ - gamma`.
pub fn residual(scores: &[f64], gamma: f64, z: f64) -> f64 {
    scores.iter().map(|&l| (l - z).max(0.0)).sum::<f64>() - gamma
}
