//! Single differential MP neuron used as a binary classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Class;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::mp::DifferentialValue;
use crate::ops::{NoCount, OpSink};
use crate::trainer::Trainable;
use crate::unit::{l1_output_grad, GradRule, Unit, UnitActivation};

pub type PerceptronActivations = UnitActivation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptronParams {
    pub n: usize,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub b_plus: f64,
    pub b_minus: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PerceptronGrads {
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub b_plus: f64,
    pub b_minus: f64,
}

impl PerceptronParams {
    /// Uniform `[0, 1]` initialization for every differential component.
    pub fn random<R: Rng + ?Sized>(n: usize, gamma: f64, rng: &mut R) -> Self {
        let mut draw = |k: usize| (0..k).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
        let w_plus = draw(n);
        let w_minus = draw(n);
        let b = draw(2);
        Self {
            n,
            w_plus,
            w_minus,
            b_plus: b[0],
            b_minus: b[1],
            gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.w_plus.len() != self.n || self.w_minus.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: self.w_plus.len().min(self.w_minus.len()),
            });
        }
        if !(self.gamma > 0.0) {
            return Err(Error::NonPositiveGamma(self.gamma));
        }
        let all_finite = self
            .w_plus
            .iter()
            .chain(&self.w_minus)
            .chain([&self.b_plus, &self.b_minus])
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidConfig("perceptron parameters must be finite".into()));
        }
        Ok(())
    }

    fn unit(&self) -> Unit<'_> {
        Unit {
            w_plus: &self.w_plus,
            w_minus: &self.w_minus,
            bias: Some((self.b_plus, self.b_minus)),
            gamma: self.gamma,
        }
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

    pub fn forward(&self, x: &[DifferentialValue]) -> Result<PerceptronActivations> {
        self.forward_traced(x, &mut NoCount)
    }

    pub fn forward_traced<S: OpSink>(&self, x: &[DifferentialValue], sink: &mut S) -> Result<PerceptronActivations> {
        self.check_dim(x)?;
        Ok(self.unit().forward(x, sink))
    }

    /// Subgradient of the per-sample L1 error `|y+ - p+| + |y- - p-|`.
    pub fn grads(&self, x: &[DifferentialValue], y_plus: f64, rule: GradRule) -> Result<PerceptronGrads> {
        if y_plus != 0.0 && y_plus != 1.0 {
            return Err(Error::NonBinaryLabels(format!("y+ = {y_plus}")));
        }
        let act = self.forward(x)?;
        let (gp, gm) = l1_output_grad(act.p_plus, act.p_minus, y_plus);
        let g = self.unit().backward(x, &act, gp, gm, rule);
        Ok(PerceptronGrads {
            w_plus: g.w_plus,
            w_minus: g.w_minus,
            b_plus: g.b_plus,
            b_minus: g.b_minus,
        })
    }

    /// Distance of `x` from the nearest kink.
    pub fn kink_margin(&self, x: &[DifferentialValue]) -> Result<f64> {
        let act = self.forward(x)?;
        Ok(self.unit().kink_margin(x, &act))
    }

    /// One step `theta <- theta - epsilon * dE/dtheta`.
    pub fn update(&self, grads: &PerceptronGrads, epsilon: f64) -> Self {
        let step = |w: &[f64], g: &[f64]| w.iter().zip(g).map(|(w, g)| w - epsilon * g).collect();
        Self {
            w_plus: step(&self.w_plus, &grads.w_plus),
            w_minus: step(&self.w_minus, &grads.w_minus),
            b_plus: self.b_plus - epsilon * grads.b_plus,
            b_minus: self.b_minus - epsilon * grads.b_minus,
            ..self.clone()
        }
    }
}

impl Classifier for PerceptronParams {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn decision(&self, x: &[DifferentialValue]) -> Result<f64> {
        Ok(self.forward(x)?.decision())
    }

    fn predict(&self, x: &[DifferentialValue]) -> Result<Class> {
        let a = self.forward(x)?;
        Ok(Class::from_pair(a.p_plus, a.p_minus))
    }
}

impl Trainable for PerceptronParams {
    type Prepared = Vec<DifferentialValue>;

    fn prepare(&self, x: &[DifferentialValue]) -> Result<Self::Prepared> {
        self.check_dim(x)?;
        Ok(x.to_vec())
    }

    fn output_pair<S: OpSink>(&self, x: &Self::Prepared, sink: &mut S) -> Result<(f64, f64)> {
        let a = self.forward_traced(x, sink)?;
        Ok((a.p_plus, a.p_minus))
    }

    fn sample_grad(&self, x: &Self::Prepared, y_plus: f64, rule: GradRule) -> Result<Vec<f64>> {
        let g = self.grads(x, y_plus, rule)?;
        let mut flat = g.w_plus;
        flat.extend(g.w_minus);
        flat.extend([g.b_plus, g.b_minus]);
        Ok(flat)
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut flat = self.w_plus.clone();
        flat.extend(&self.w_minus);
        flat.extend([self.b_plus, self.b_minus]);
        flat
    }

    fn set_params_flat(&mut self, flat: &[f64]) {
        let n = self.n;
        self.w_plus.copy_from_slice(&flat[..n]);
        self.w_minus.copy_from_slice(&flat[n..2 * n]);
        self.b_plus = flat[2 * n];
        self.b_minus = flat[2 * n + 1];
    }

    fn gammas(&self) -> Vec<f64> {
        vec![self.gamma]
    }

    fn set_gammas(&mut self, gammas: &[f64]) {
        self.gamma = gammas[0];
    }
}
