//! MP kernel machine with a Cauchy kernel evaluated in the log domain.
//!
//! Kernel construction, per input dimension with center `a` and input `b`
//! (both differential pairs with `plus + minus = 1`): the squared distance
//! `(a+ - a- - b+ + b-)^2` expands into ten products. The four negative ones,
//! `-2uv`, are shifted by `2` and rewritten with the normalization identity
//! as `2(1 - uv) = 2u' + 2uv'` (primes are complements), which is never
//! negative. Every slot then receives an equal share of the Cauchy constant
//! `c`, so the ten slots over all `N` dimensions sum to
//! `c + 8N + ||a - b||^2`. Each slot is mapped to the log domain and the
//! kernel is `K = -MP(log slots, gamma2)`, which shrinks as the distance grows.
//!
//! The decision stage is a bias-free differential MP neuron over the split
//! kernel values `K+ = [K]_+`, `K- = [-K]_+`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Class;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::mp::{threshold_count, DifferentialValue};
use crate::ops::{NoCount, Op, OpSink};
use crate::trainer::Trainable;
use crate::unit::{l1_output_grad, GradRule, Unit, UnitActivation};

/// Products per input dimension in the distance expansion.
pub const TERMS_PER_DIM: usize = 10;

const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub n: usize,
    pub s: usize,
    /// Support centers, stored as the `plus` component of each dimension;
    /// `minus = 1 - plus`.
    pub centers: Vec<Vec<f64>>,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    /// Decision-level gamma.
    pub gamma: f64,
    /// Kernel-level gamma.
    pub gamma2: f64,
    /// Cauchy constant.
    pub c: f64,
}

/// Output of the decision stage: `L_f± = MP(...)`, `f = L_f+ - L_f-`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmDecision {
    pub l_f_plus: f64,
    pub l_f_minus: f64,
    pub f: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmGrads {
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
}

fn check_normalized(v: &[DifferentialValue]) -> Result<()> {
    match v.iter().enumerate().find(|(_, d)| !d.is_normalized(NORM_TOL)) {
        Some((dim, d)) => Err(Error::NotNormalized {
            dim,
            plus: d.plus,
            minus: d.minus,
        }),
        None => Ok(()),
    }
}

/// Log-domain slot list for one (center, input) pair; `10 N` entries.
pub fn kernel_terms(center: &[DifferentialValue], x: &[DifferentialValue], c: f64) -> Result<Vec<f64>> {
    kernel_terms_traced(center, x, c, &mut NoCount)
}

fn kernel_terms_traced<S: OpSink>(center: &[DifferentialValue], x: &[DifferentialValue], c: f64, sink: &mut S) -> Result<Vec<f64>> {
    if center.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: center.len(),
            actual: x.len(),
        });
    }
    check_normalized(center)?;
    check_normalized(x)?;
    let share = c / (TERMS_PER_DIM * x.len()) as f64;
    let mut terms = Vec::with_capacity(TERMS_PER_DIM * x.len());
    for (a, b) in center.iter().zip(x) {
        let slots = [
            a.plus * a.plus,
            a.minus * a.minus,
            b.plus * b.plus,
            b.minus * b.minus,
            2.0 * (a.plus * b.minus),
            2.0 * (a.minus * b.plus),
            2.0 - 2.0 * (a.plus * a.minus),
            2.0 - 2.0 * (a.plus * b.plus),
            2.0 - 2.0 * (a.minus * b.minus),
            2.0 - 2.0 * (b.plus * b.minus),
        ];
        terms.extend(slots.iter().map(|&q| (q.max(0.0) + share).ln()));
    }
    // products, shifts by the constant, logarithms
    sink.record(Op::Encoding, 3 * terms.len() as u64);
    Ok(terms)
}

/// Log-domain Cauchy kernel `K_s = -MP(terms, gamma2)`.
pub fn cauchy_kernel_mp(center: &[DifferentialValue], x: &[DifferentialValue], gamma2: f64, c: f64) -> Result<f64> {
    kernel_traced(center, x, gamma2, c, &mut NoCount)
}

fn kernel_traced<S: OpSink>(center: &[DifferentialValue], x: &[DifferentialValue], gamma2: f64, c: f64, sink: &mut S) -> Result<f64> {
    if !(gamma2 > 0.0) {
        return Err(Error::NonPositiveGamma(gamma2));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidConfig(format!("Cauchy constant must be positive, got {c}")));
    }
    let terms = kernel_terms_traced(center, x, c, sink)?;
    let (z, _) = threshold_count(&terms, gamma2, sink);
    Ok(-z)
}

/// `K = K+ - K-` with `K+ = [K]_+`, `K- = [-K]_+`.
pub fn split_kernel(k: f64) -> DifferentialValue {
    DifferentialValue::new(k.max(0.0), (-k).max(0.0))
}

impl SvmParams {
    /// Every training sample becomes a center; weights uniform in `[0, 1]`.
    pub fn from_centers<R: Rng + ?Sized>(
        centers: &[Vec<DifferentialValue>],
        gamma: f64,
        gamma2: f64,
        c: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let s = centers.len();
        if s == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = centers[0].len();
        for center in centers {
            if center.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: center.len(),
                });
            }
            check_normalized(center)?;
        }
        let w_plus = (0..s).map(|_| rng.random::<f64>()).collect();
        let w_minus = (0..s).map(|_| rng.random::<f64>()).collect();
        let params = Self {
            n,
            s,
            centers: centers
                .iter()
                .map(|c| c.iter().map(|d| d.plus).collect())
                .collect(),
            w_plus,
            w_minus,
            gamma,
            gamma2,
            c,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.len() != self.s || self.w_plus.len() != self.s || self.w_minus.len() != self.s {
            return Err(Error::DimensionMismatch {
                expected: self.s,
                actual: self.centers.len(),
            });
        }
        if let Some(c) = self.centers.iter().find(|c| c.len() != self.n) {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: c.len(),
            });
        }
        for g in [self.gamma, self.gamma2] {
            if !(g > 0.0) {
                return Err(Error::NonPositiveGamma(g));
            }
        }
        if !(self.c > 0.0) {
            return Err(Error::InvalidConfig(format!("Cauchy constant must be positive, got {}", self.c)));
        }
        for (s, center) in self.centers.iter().enumerate() {
            if center.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidConfig(format!("center {s} leaves [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn center(&self, s: usize) -> Vec<DifferentialValue> {
        self.centers[s].iter().map(|&v| DifferentialValue::from_unit(v)).collect()
    }

    fn check_dim(&self, x: &[DifferentialValue]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Split kernel values `(K_s+, K_s-)` against every center.
    pub fn kernel_features(&self, x: &[DifferentialValue]) -> Result<Vec<DifferentialValue>> {
        self.kernel_features_traced(x, &mut NoCount)
    }

    pub fn kernel_features_traced<S: OpSink>(&self, x: &[DifferentialValue], sink: &mut S) -> Result<Vec<DifferentialValue>> {
        self.check_dim(x)?;
        (0..self.s)
            .map(|s| kernel_traced(&self.center(s), x, self.gamma2, self.c, sink).map(split_kernel))
            .collect()
    }

    fn unit(&self) -> Unit<'_> {
        Unit {
            w_plus: &self.w_plus,
            w_minus: &self.w_minus,
            bias: None,
            gamma: self.gamma,
        }
    }

    /// Decision stage on precomputed kernel features.
    pub fn activation_from_features<S: OpSink>(&self, features: &[DifferentialValue], sink: &mut S) -> Result<UnitActivation> {
        if features.len() != self.s {
            return Err(Error::DimensionMismatch {
                expected: self.s,
                actual: features.len(),
            });
        }
        Ok(self.unit().forward(features, sink))
    }

    pub fn decision_traced<S: OpSink>(&self, x: &[DifferentialValue], sink: &mut S) -> Result<SvmDecision> {
        let features = self.kernel_features_traced(x, sink)?;
        let a = self.activation_from_features(&features, sink)?;
        Ok(SvmDecision {
            l_f_plus: a.z_plus,
            l_f_minus: a.z_minus,
            f: a.z_plus - a.z_minus,
        })
    }

    pub fn svm_decision(&self, x: &[DifferentialValue]) -> Result<SvmDecision> {
        self.decision_traced(x, &mut NoCount)
    }

    fn grads_from_features(&self, features: &[DifferentialValue], y_plus: f64, rule: GradRule) -> Result<SvmGrads> {
        if y_plus != 0.0 && y_plus != 1.0 {
            return Err(Error::NonBinaryLabels(format!("y+ = {y_plus}")));
        }
        let a = self.activation_from_features(features, &mut NoCount)?;
        let (gp, gm) = l1_output_grad(a.p_plus, a.p_minus, y_plus);
        let g = self.unit().backward(features, &a, gp, gm, rule);
        Ok(SvmGrads {
            w_plus: g.w_plus,
            w_minus: g.w_minus,
        })
    }

    /// Distance of the decision stage from its nearest kink; kernel values
    /// are constants with respect to the weights.
    pub fn kink_margin(&self, x: &[DifferentialValue]) -> Result<f64> {
        let features = self.kernel_features(x)?;
        let a = self.activation_from_features(&features, &mut NoCount)?;
        Ok(self.unit().kink_margin(&features, &a))
    }

    /// L1 subgradients for the center weights; kernel values are constants.
    pub fn svm_grads(&self, x: &[DifferentialValue], y_plus: f64, rule: GradRule) -> Result<SvmGrads> {
        let features = self.kernel_features(x)?;
        self.grads_from_features(&features, y_plus, rule)
    }
}

impl Classifier for SvmParams {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn decision(&self, x: &[DifferentialValue]) -> Result<f64> {
        Ok(self.svm_decision(x)?.f)
    }

    fn predict(&self, x: &[DifferentialValue]) -> Result<Class> {
        Ok(if self.svm_decision(x)?.f >= 0.0 {
            Class::Plus
        } else {
            Class::Minus
        })
    }
}

impl Trainable for SvmParams {
    type Prepared = Vec<DifferentialValue>;

    fn prepare(&self, x: &[DifferentialValue]) -> Result<Self::Prepared> {
        self.kernel_features(x)
    }

    fn output_pair<S: OpSink>(&self, features: &Self::Prepared, sink: &mut S) -> Result<(f64, f64)> {
        let a = self.activation_from_features(features, sink)?;
        Ok((a.p_plus, a.p_minus))
    }

    fn sample_grad(&self, features: &Self::Prepared, y_plus: f64, rule: GradRule) -> Result<Vec<f64>> {
        let g = self.grads_from_features(features, y_plus, rule)?;
        let mut flat = g.w_plus;
        flat.extend(g.w_minus);
        Ok(flat)
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut flat = self.w_plus.clone();
        flat.extend(&self.w_minus);
        flat
    }

    fn set_params_flat(&mut self, flat: &[f64]) {
        self.w_plus.copy_from_slice(&flat[..self.s]);
        self.w_minus.copy_from_slice(&flat[self.s..]);
    }

    fn gammas(&self) -> Vec<f64> {
        vec![self.gamma]
    }

    fn set_gammas(&mut self, gammas: &[f64]) {
        self.gamma = gammas[0];
    }
}
