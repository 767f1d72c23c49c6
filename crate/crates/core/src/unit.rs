//! Differential MP neuron shared by the perceptron, both MLP layers and the
//! SVM decision stage.
//!
//! For inputs `u` and weights `w` the two term lists are
//!
//! ```text
//! T+ = { w+_i + u+_i, w-_i + u-_i, b+ }      z+ = MP(T+, gamma)
//! T- = { w+_i + u-_i, w-_i + u+_i, b- }      z- = MP(T-, gamma)
//! ```
//!
//! followed by `(p+, p-) = [z± - MP({z+, z-}, 1)]_+`. Term `2i` holds the
//! `w+_i` entry and `2i + 1` the `w-_i` entry; the bias (if any) is last.

use serde::{Deserialize, Serialize};

use crate::mp::{output_normalize_traced, threshold_count, DifferentialValue};
use crate::ops::{Op, OpSink};

/// Which local derivative of the output normalization to use in backprop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradRule {
    /// Full chain rule through `z = MP({z+, z-}, 1)`, including the
    /// `-1/A` coupling between `p+` and `z-` (and `p-` and `z+`).
    #[default]
    Exact,
    /// Indicator products only: `dp+/dz+ = (1 - 1/A) 1(z+ > z)`,
    /// cross terms dropped.
    AsPrinted,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitActivation {
    pub z_plus: f64,
    pub z_minus: f64,
    pub z: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    /// Active terms in `T+`.
    pub ap_count: usize,
    /// Active terms in `T-`.
    pub an_count: usize,
    /// Active members of `{z+, z-}`.
    pub a_count: usize,
}

impl UnitActivation {
    pub fn decision(&self) -> f64 {
        self.p_plus - self.p_minus
    }
}

/// Borrowed view of one neuron's parameters.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Unit<'a> {
    pub w_plus: &'a [f64],
    pub w_minus: &'a [f64],
    pub bias: Option<(f64, f64)>,
    pub gamma: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct UnitGrads {
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub b_plus: f64,
    pub b_minus: f64,
    /// dE/du± for each input pair.
    pub inputs: Vec<DifferentialValue>,
}

impl<'a> Unit<'a> {
    pub fn term_lists(&self, inputs: &[DifferentialValue]) -> (Vec<f64>, Vec<f64>) {
        let n = inputs.len();
        let extra = usize::from(self.bias.is_some());
        let mut plus = Vec::with_capacity(2 * n + extra);
        let mut minus = Vec::with_capacity(2 * n + extra);
        for ((&wp, &wm), u) in self.w_plus.iter().zip(self.w_minus).zip(inputs) {
            plus.push(wp + u.plus);
            plus.push(wm + u.minus);
            minus.push(wp + u.minus);
            minus.push(wm + u.plus);
        }
        if let Some((bp, bm)) = self.bias {
            plus.push(bp);
            minus.push(bm);
        }
        (plus, minus)
    }

    pub fn forward<S: OpSink>(&self, inputs: &[DifferentialValue], sink: &mut S) -> UnitActivation {
        debug_assert_eq!(self.w_plus.len(), inputs.len());
        let (plus, minus) = self.term_lists(inputs);
        sink.record(Op::Add, 4 * inputs.len() as u64);
        let (z_plus, ap_count) = threshold_count(&plus, self.gamma, sink);
        let (z_minus, an_count) = threshold_count(&minus, self.gamma, sink);
        let norm = output_normalize_traced(z_plus, z_minus, sink);
        UnitActivation {
            z_plus,
            z_minus,
            z: norm.z,
            p_plus: norm.p_plus,
            p_minus: norm.p_minus,
            ap_count,
            an_count,
            a_count: norm.a_count,
        }
    }

    /// Distance to the nearest non-differentiable point: every term to its
    /// threshold and each branch to the normalization threshold.
    pub fn kink_margin(&self, inputs: &[DifferentialValue], act: &UnitActivation) -> f64 {
        let (plus, minus) = self.term_lists(inputs);
        let terms = plus
            .iter()
            .map(|t| (t - act.z_plus).abs())
            .chain(minus.iter().map(|t| (t - act.z_minus).abs()));
        terms
            .chain([(act.z_plus - act.z).abs(), (act.z_minus - act.z).abs()])
            .fold(f64::INFINITY, f64::min)
    }

    /// Maps `(dE/dp+, dE/dp-)` to `(dE/dz+, dE/dz-)`.
    pub fn normalization_backward(act: &UnitActivation, g_plus: f64, g_minus: f64, rule: GradRule) -> (f64, f64) {
        let on_p = act.z_plus > act.z;
        let on_m = act.z_minus > act.z;
        let inv_a = 1.0 / act.a_count as f64;
        let dpp_dzp = if on_p { 1.0 - inv_a } else { 0.0 };
        let dpm_dzm = if on_m { 1.0 - inv_a } else { 0.0 };
        let cross = match rule {
            GradRule::Exact if on_p && on_m => -inv_a,
            _ => 0.0,
        };
        (
            g_plus * dpp_dzp + g_minus * cross,
            g_minus * dpm_dzm + g_plus * cross,
        )
    }

    /// Backpropagates `(dE/dp+, dE/dp-)` to weights, bias and inputs.
    pub fn backward(
        &self,
        inputs: &[DifferentialValue],
        act: &UnitActivation,
        g_plus: f64,
        g_minus: f64,
        rule: GradRule,
    ) -> UnitGrads {
        let n = inputs.len();
        let mut grads = UnitGrads {
            w_plus: vec![0.0; n],
            w_minus: vec![0.0; n],
            b_plus: 0.0,
            b_minus: 0.0,
            inputs: vec![DifferentialValue::default(); n],
        };
        let (g_zp, g_zm) = Self::normalization_backward(act, g_plus, g_minus, rule);
        if g_zp == 0.0 && g_zm == 0.0 {
            return grads;
        }
        let (plus, minus) = self.term_lists(inputs);
        let tp = g_zp / act.ap_count as f64;
        let tm = g_zm / act.an_count as f64;
        let gate = |terms: &[f64], k: usize, z: f64, g: f64| if terms[k] > z { g } else { 0.0 };
        for i in 0..n {
            // T+[2i] = w+ + u+, T+[2i+1] = w- + u-, T-[2i] = w+ + u-, T-[2i+1] = w- + u+
            let p0 = gate(&plus, 2 * i, act.z_plus, tp);
            let p1 = gate(&plus, 2 * i + 1, act.z_plus, tp);
            let m0 = gate(&minus, 2 * i, act.z_minus, tm);
            let m1 = gate(&minus, 2 * i + 1, act.z_minus, tm);
            grads.w_plus[i] = p0 + m0;
            grads.w_minus[i] = p1 + m1;
            grads.inputs[i] = DifferentialValue::new(p0 + m1, p1 + m0);
        }
        if self.bias.is_some() {
            grads.b_plus = gate(&plus, 2 * n, act.z_plus, tp);
            grads.b_minus = gate(&minus, 2 * n, act.z_minus, tm);
        }
        grads
    }
}

/// `sign` with `sign(0) = 0`.
pub fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(dE/dp+, dE/dp-)` for `E = |y+ - p+| + |y- - p-|`.
pub fn l1_output_grad(p_plus: f64, p_minus: f64, y_plus: f64) -> (f64, f64) {
    (sign0(p_plus - y_plus), sign0(p_minus - (1.0 - y_plus)))
}
