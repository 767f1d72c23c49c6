//! Three-layer MP network: `I` differential inputs, `J` hidden MP neurons and
//! one differential output neuron.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Class;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::mp::DifferentialValue;
use crate::ops::{NoCount, OpSink};
use crate::trainer::Trainable;
use crate::unit::{l1_output_grad, GradRule, Unit, UnitActivation};

/// Weights `w_ij` are stored `[i][j]` (input-major), matching the JSON layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub i: usize,
    pub j: usize,
    pub w_ij_plus: Vec<Vec<f64>>,
    pub w_ij_minus: Vec<Vec<f64>>,
    pub w_jk_plus: Vec<f64>,
    pub w_jk_minus: Vec<f64>,
    pub b_j_plus: Vec<f64>,
    pub b_j_minus: Vec<f64>,
    pub b_k_plus: f64,
    pub b_k_minus: f64,
    pub gamma_j: f64,
    pub gamma_k: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpActivations {
    pub hidden: Vec<UnitActivation>,
    pub output: UnitActivation,
}

impl MlpActivations {
    pub fn hidden_outputs(&self) -> Vec<DifferentialValue> {
        self.hidden
            .iter()
            .map(|h| DifferentialValue::new(h.p_plus, h.p_minus))
            .collect()
    }

    pub fn decision(&self) -> f64 {
        self.output.decision()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub w_ij_plus: Vec<Vec<f64>>,
    pub w_ij_minus: Vec<Vec<f64>>,
    pub w_jk_plus: Vec<f64>,
    pub w_jk_minus: Vec<f64>,
    pub b_j_plus: Vec<f64>,
    pub b_j_minus: Vec<f64>,
    pub b_k_plus: f64,
    pub b_k_minus: f64,
}

fn column(m: &[Vec<f64>], j: usize) -> Vec<f64> {
    m.iter().map(|row| row[j]).collect()
}

impl MlpParams {
    /// Uniform `[0, 1]` initialization for every differential component.
    pub fn random<R: Rng + ?Sized>(i: usize, j: usize, gamma_j: f64, gamma_k: f64, rng: &mut R) -> Self {
        Self::random_with_range(i, j, gamma_j, gamma_k, 1.0, rng)
    }

    /// Weights uniform in `[0, weight_range]`, biases uniform in `[0, 1]`.
    pub fn random_with_range<R: Rng + ?Sized>(
        i: usize,
        j: usize,
        gamma_j: f64,
        gamma_k: f64,
        weight_range: f64,
        rng: &mut R,
    ) -> Self {
        let mut vec = |k: usize, scale: f64| (0..k).map(|_| scale * rng.random::<f64>()).collect::<Vec<_>>();
        let w_ij_plus = (0..i).map(|_| vec(j, weight_range)).collect();
        let w_ij_minus = (0..i).map(|_| vec(j, weight_range)).collect();
        let w_jk_plus = vec(j, weight_range);
        let w_jk_minus = vec(j, weight_range);
        let b_j_plus = vec(j, 1.0);
        let b_j_minus = vec(j, 1.0);
        let b_k = vec(2, 1.0);
        Self {
            i,
            j,
            w_ij_plus,
            w_ij_minus,
            w_jk_plus,
            w_jk_minus,
            b_j_plus,
            b_j_minus,
            b_k_plus: b_k[0],
            b_k_minus: b_k[1],
            gamma_j,
            gamma_k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (i, j) = (self.i, self.j);
        let mismatch = |expected: usize, actual: usize| Error::DimensionMismatch { expected, actual };
        if i == 0 || j == 0 {
            return Err(Error::InvalidConfig("MLP needs i >= 1 and j >= 1".into()));
        }
        for m in [&self.w_ij_plus, &self.w_ij_minus] {
            if m.len() != i {
                return Err(mismatch(i, m.len()));
            }
            if let Some(row) = m.iter().find(|r| r.len() != j) {
                return Err(mismatch(j, row.len()));
            }
        }
        for v in [&self.w_jk_plus, &self.w_jk_minus, &self.b_j_plus, &self.b_j_minus] {
            if v.len() != j {
                return Err(mismatch(j, v.len()));
            }
        }
        for g in [self.gamma_j, self.gamma_k] {
            if !(g > 0.0) {
                return Err(Error::NonPositiveGamma(g));
            }
        }
        if !self.params_flat().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("MLP parameters must be finite".into()));
        }
        Ok(())
    }

    fn check_dim(&self, x: &[DifferentialValue]) -> Result<()> {
        if x.len() != self.i {
            return Err(Error::DimensionMismatch {
                expected: self.i,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn output_unit(&self) -> Unit<'_> {
        Unit {
            w_plus: &self.w_jk_plus,
            w_minus: &self.w_jk_minus,
            bias: Some((self.b_k_plus, self.b_k_minus)),
            gamma: self.gamma_k,
        }
    }

    pub fn forward(&self, x: &[DifferentialValue]) -> Result<MlpActivations> {
        self.forward_traced(x, &mut NoCount)
    }

    pub fn forward_traced<S: OpSink>(&self, x: &[DifferentialValue], sink: &mut S) -> Result<MlpActivations> {
        self.check_dim(x)?;
        let hidden: Vec<UnitActivation> = (0..self.j)
            .map(|j| {
                let wp = column(&self.w_ij_plus, j);
                let wm = column(&self.w_ij_minus, j);
                Unit {
                    w_plus: &wp,
                    w_minus: &wm,
                    bias: Some((self.b_j_plus[j], self.b_j_minus[j])),
                    gamma: self.gamma_j,
                }
                .forward(x, sink)
            })
            .collect();
        let p_j: Vec<DifferentialValue> = hidden
            .iter()
            .map(|h| DifferentialValue::new(h.p_plus, h.p_minus))
            .collect();
        let output = self.output_unit().forward(&p_j, sink);
        Ok(MlpActivations { hidden, output })
    }

    /// Per-sample L1 subgradients for every parameter, given the activations
    /// from [`MlpParams::forward`] on the same input.
    pub fn backward(
        &self,
        acts: &MlpActivations,
        x: &[DifferentialValue],
        y_plus: f64,
        rule: GradRule,
    ) -> Result<MlpGrads> {
        self.check_dim(x)?;
        if acts.hidden.len() != self.j {
            return Err(Error::DimensionMismatch {
                expected: self.j,
                actual: acts.hidden.len(),
            });
        }
        if y_plus != 0.0 && y_plus != 1.0 {
            return Err(Error::NonBinaryLabels(format!("y+ = {y_plus}")));
        }
        let out = &acts.output;
        let (gp, gm) = l1_output_grad(out.p_plus, out.p_minus, y_plus);
        let p_j = acts.hidden_outputs();
        let og = self.output_unit().backward(&p_j, out, gp, gm, rule);

        let mut w_ij_plus = vec![vec![0.0; self.j]; self.i];
        let mut w_ij_minus = vec![vec![0.0; self.j]; self.i];
        let mut b_j_plus = vec![0.0; self.j];
        let mut b_j_minus = vec![0.0; self.j];
        for j in 0..self.j {
            let up = og.inputs[j];
            if up.plus == 0.0 && up.minus == 0.0 {
                continue;
            }
            let wp = column(&self.w_ij_plus, j);
            let wm = column(&self.w_ij_minus, j);
            let unit = Unit {
                w_plus: &wp,
                w_minus: &wm,
                bias: Some((self.b_j_plus[j], self.b_j_minus[j])),
                gamma: self.gamma_j,
            };
            let hg = unit.backward(x, &acts.hidden[j], up.plus, up.minus, rule);
            for i in 0..self.i {
                w_ij_plus[i][j] = hg.w_plus[i];
                w_ij_minus[i][j] = hg.w_minus[i];
            }
            b_j_plus[j] = hg.b_plus;
            b_j_minus[j] = hg.b_minus;
        }
        Ok(MlpGrads {
            w_ij_plus,
            w_ij_minus,
            w_jk_plus: og.w_plus,
            w_jk_minus: og.w_minus,
            b_j_plus,
            b_j_minus,
            b_k_plus: og.b_plus,
            b_k_minus: og.b_minus,
        })
    }

    /// Distance of `x` from the nearest kink of the piecewise-linear map.
    pub fn kink_margin(&self, x: &[DifferentialValue]) -> Result<f64> {
        let acts = self.forward(x)?;
        let mut m = self.output_unit().kink_margin(&acts.hidden_outputs(), &acts.output);
        for j in 0..self.j {
            let wp = column(&self.w_ij_plus, j);
            let wm = column(&self.w_ij_minus, j);
            let unit = Unit {
                w_plus: &wp,
                w_minus: &wm,
                bias: Some((self.b_j_plus[j], self.b_j_minus[j])),
                gamma: self.gamma_j,
            };
            m = m.min(unit.kink_margin(x, &acts.hidden[j]));
        }
        Ok(m)
    }

    /// Label (`+` iff `p_k+ >= p_k-`) and decision value `p = p_k+ - p_k-`.
    pub fn predict_with_confidence(&self, x: &[DifferentialValue]) -> Result<(Class, f64)> {
        let a = self.forward(x)?;
        Ok((Class::from_pair(a.output.p_plus, a.output.p_minus), a.decision()))
    }
}

impl MlpGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w_ij_plus.iter().flatten().copied().collect();
        v.extend(self.w_ij_minus.iter().flatten());
        v.extend(&self.w_jk_plus);
        v.extend(&self.w_jk_minus);
        v.extend(&self.b_j_plus);
        v.extend(&self.b_j_minus);
        v.extend([self.b_k_plus, self.b_k_minus]);
        v
    }
}

impl Classifier for MlpParams {
    fn input_dim(&self) -> usize {
        self.i
    }

    fn decision(&self, x: &[DifferentialValue]) -> Result<f64> {
        Ok(self.forward(x)?.decision())
    }

    fn predict(&self, x: &[DifferentialValue]) -> Result<Class> {
        Ok(self.predict_with_confidence(x)?.0)
    }
}

impl Trainable for MlpParams {
    type Prepared = Vec<DifferentialValue>;

    fn prepare(&self, x: &[DifferentialValue]) -> Result<Self::Prepared> {
        self.check_dim(x)?;
        Ok(x.to_vec())
    }

    fn output_pair<S: OpSink>(&self, x: &Self::Prepared, sink: &mut S) -> Result<(f64, f64)> {
        let a = self.forward_traced(x, sink)?;
        Ok((a.output.p_plus, a.output.p_minus))
    }

    fn sample_grad(&self, x: &Self::Prepared, y_plus: f64, rule: GradRule) -> Result<Vec<f64>> {
        let acts = self.forward(x)?;
        Ok(self.backward(&acts, x, y_plus, rule)?.flat())
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w_ij_plus.iter().flatten().copied().collect();
        v.extend(self.w_ij_minus.iter().flatten());
        v.extend(&self.w_jk_plus);
        v.extend(&self.w_jk_minus);
        v.extend(&self.b_j_plus);
        v.extend(&self.b_j_minus);
        v.extend([self.b_k_plus, self.b_k_minus]);
        v
    }

    fn set_params_flat(&mut self, flat: &[f64]) {
        let (ni, nj) = (self.i, self.j);
        let mut it = flat.iter().copied();
        for m in [&mut self.w_ij_plus, &mut self.w_ij_minus] {
            for row in m.iter_mut() {
                for w in row.iter_mut() {
                    *w = it.next().expect("flat length");
                }
            }
        }
        for v in [
            &mut self.w_jk_plus,
            &mut self.w_jk_minus,
            &mut self.b_j_plus,
            &mut self.b_j_minus,
        ] {
            for w in v.iter_mut() {
                *w = it.next().expect("flat length");
            }
        }
        self.b_k_plus = it.next().expect("flat length");
        self.b_k_minus = it.next().expect("flat length");
        debug_assert!(it.next().is_none(), "flat length for {ni}x{nj} network");
    }

    fn gammas(&self) -> Vec<f64> {
        vec![self.gamma_j, self.gamma_k]
    }

    fn set_gammas(&mut self, gammas: &[f64]) {
        self.gamma_j = gammas[0];
        self.gamma_k = gammas[1];
    }
}
