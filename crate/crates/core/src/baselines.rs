//! Conventional comparison models: a sigmoid MLP trained on squared error and
//! a real-domain Cauchy-kernel machine trained on the L1 loss.
//!
//! Both read the signed input `x~ = x+ - x-` in `[-1, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Class, Dataset};
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::mp::DifferentialValue;
use crate::trainer::{make_pool, map_indexed, CurvePoint, TrainConfig, TrainingCurve};
use crate::unit::sign0;

pub fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

fn signed(x: &[DifferentialValue]) -> Vec<f64> {
    x.iter().map(DifferentialValue::value).collect()
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `y = s(sum_j w_kj h_j + b_k)`, `h_j = s(sum_i w_ji x~_i + b_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvMlpParams {
    pub i: usize,
    pub j: usize,
    /// `[j][i]`.
    pub w_ji: Vec<Vec<f64>>,
    pub b_j: Vec<f64>,
    pub w_kj: Vec<f64>,
    pub b_k: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvMlpForward {
    pub hidden: Vec<f64>,
    pub output: f64,
}

impl ConvMlpParams {
    /// Uniform `[-1, 1]` initialization.
    pub fn random<R: Rng + ?Sized>(i: usize, j: usize, rng: &mut R) -> Self {
        let mut u = || 2.0 * rng.random::<f64>() - 1.0;
        let w_ji = (0..j).map(|_| (0..i).map(|_| u()).collect()).collect();
        let b_j = (0..j).map(|_| u()).collect();
        let w_kj = (0..j).map(|_| u()).collect();
        let b_k = u();
        Self { i, j, w_ji, b_j, w_kj, b_k }
    }

    pub fn validate(&self) -> Result<()> {
        check_len(self.j, self.w_ji.len())?;
        check_len(self.j, self.b_j.len())?;
        check_len(self.j, self.w_kj.len())?;
        for row in &self.w_ji {
            check_len(self.i, row.len())?;
        }
        Ok(())
    }

    /// Forward pass on signed inputs.
    pub fn forward_signed(&self, x: &[f64]) -> Result<ConvMlpForward> {
        check_len(self.i, x.len())?;
        let hidden: Vec<f64> = self
            .w_ji
            .iter()
            .zip(&self.b_j)
            .map(|(row, b)| sigmoid(row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b))
            .collect();
        let a_k = self.w_kj.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + self.b_k;
        Ok(ConvMlpForward {
            hidden,
            output: sigmoid(a_k),
        })
    }

    pub fn forward(&self, x: &[DifferentialValue]) -> Result<ConvMlpForward> {
        self.forward_signed(&signed(x))
    }

    /// `1/2 (t - y)^2` for target `t` in `{0, 1}`.
    pub fn sample_loss(&self, x: &[DifferentialValue], t: f64) -> Result<f64> {
        let y = self.forward(x)?.output;
        Ok(0.5 * (t - y).powi(2))
    }

    /// Gradient of [`ConvMlpParams::sample_loss`], laid out like
    /// [`ConvMlpParams::params_flat`].
    pub fn sample_grad(&self, x: &[DifferentialValue], t: f64) -> Result<Vec<f64>> {
        let xs = signed(x);
        let f = self.forward_signed(&xs)?;
        let y = f.output;
        let delta_k = (y - t) * y * (1.0 - y);
        let mut g_wji = Vec::with_capacity(self.i * self.j);
        let mut g_bj = Vec::with_capacity(self.j);
        for (w_kj, h) in self.w_kj.iter().zip(&f.hidden) {
            let delta_j = delta_k * w_kj * h * (1.0 - h);
            g_wji.extend(xs.iter().map(|v| delta_j * v));
            g_bj.push(delta_j);
        }
        let mut flat = g_wji;
        flat.extend(g_bj);
        flat.extend(f.hidden.iter().map(|h| delta_k * h));
        flat.push(delta_k);
        Ok(flat)
    }

    /// `[w_ji row-major, b_j, w_kj, b_k]`.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w_ji.iter().flatten().copied().collect();
        v.extend(&self.b_j);
        v.extend(&self.w_kj);
        v.push(self.b_k);
        v
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for w in self.w_ji.iter_mut().flatten() {
            *w = it.next().expect("flat length");
        }
        for w in self.b_j.iter_mut().chain(self.w_kj.iter_mut()) {
            *w = it.next().expect("flat length");
        }
        self.b_k = it.next().expect("flat length");
    }
}

impl Classifier for ConvMlpParams {
    fn input_dim(&self) -> usize {
        self.i
    }

    /// `y - 1/2`.
    fn decision(&self, x: &[DifferentialValue]) -> Result<f64> {
        Ok(self.forward(x)?.output - 0.5)
    }
}

/// Full-batch gradient descent on the summed squared error.
pub fn conv_mlp_train(data: &Dataset, cfg: &TrainConfig) -> Result<(ConvMlpParams, TrainingCurve)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = ConvMlpParams::random(data.dim, cfg.hidden, &mut rng);
    conv_mlp_train_from(init, data, cfg)
}

pub fn conv_mlp_train_from(mut model: ConvMlpParams, data: &Dataset, cfg: &TrainConfig) -> Result<(ConvMlpParams, TrainingCurve)> {
    let pool = make_pool(cfg.threads)?;
    let targets: Vec<f64> = data.labels.iter().map(|c| c.y_plus()).collect();
    let mut curve = TrainingCurve::default();
    for epoch in 1..=cfg.epochs {
        let grads = map_indexed(pool.as_ref(), data.len(), |n| model.sample_grad(&data.samples[n], targets[n]));
        let mut flat = model.params_flat();
        for g in grads {
            for (w, g) in flat.iter_mut().zip(g?) {
                *w -= cfg.epsilon * g;
            }
        }
        model.set_params_flat(&flat);
        let mut cost = 0.0;
        let mut correct = 0;
        for (x, (&t, &c)) in data.samples.iter().zip(targets.iter().zip(&data.labels)) {
            let y = model.forward(x)?.output;
            cost += 0.5 * (t - y).powi(2);
            correct += usize::from(Class::from_decision(y - 0.5) == c);
        }
        curve.points.push(CurvePoint {
            epoch,
            cost,
            acc: correct as f64 / data.len() as f64,
            gammas: Vec::new(),
        });
    }
    Ok((model, curve))
}

/// `f(x) = sum_s w_s / (c + ||x~_s - x~||^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvSvmParams {
    pub n: usize,
    pub s: usize,
    /// `plus` component of each center dimension.
    pub centers: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub c: f64,
}

pub fn cauchy_kernel(a: &[f64], b: &[f64], c: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 / (c + d2)
}

impl ConvSvmParams {
    /// Every sample is a center; all weights start at zero.
    pub fn from_centers(centers: &[Vec<DifferentialValue>], c: f64) -> Result<Self> {
        let first = centers.first().ok_or(Error::EmptyDataset)?;
        let p = Self {
            n: first.len(),
            s: centers.len(),
            centers: centers.iter().map(|x| x.iter().map(|v| v.plus).collect()).collect(),
            w: vec![0.0; centers.len()],
            c,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_len(self.s, self.centers.len())?;
        check_len(self.s, self.w.len())?;
        for center in &self.centers {
            check_len(self.n, center.len())?;
        }
        if !(self.c > 0.0) {
            return Err(Error::InvalidConfig(format!("Cauchy constant must be positive, got {}", self.c)));
        }
        Ok(())
    }

    /// Kernel values against every center.
    pub fn kernels(&self, x: &[DifferentialValue]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        let xs = signed(x);
        Ok(self
            .centers
            .iter()
            .map(|center| {
                let cs: Vec<f64> = center.iter().map(|&v| 2.0 * v - 1.0).collect();
                cauchy_kernel(&cs, &xs, self.c)
            })
            .collect())
    }

    pub fn decision_from_kernels(&self, k: &[f64]) -> f64 {
        self.w.iter().zip(k).map(|(w, k)| w * k).sum()
    }
}

impl Classifier for ConvSvmParams {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn decision(&self, x: &[DifferentialValue]) -> Result<f64> {
        Ok(self.decision_from_kernels(&self.kernels(x)?))
    }
}

/// Gradient descent on `sum_n |t_n - f(x_n)|` with `t = +-1`.
pub fn conv_svm_train(data: &Dataset, cfg: &TrainConfig) -> Result<(ConvSvmParams, TrainingCurve)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = ConvSvmParams::from_centers(&data.samples, cfg.c)?;
    let pool = make_pool(cfg.threads)?;
    let kernels = map_indexed(pool.as_ref(), data.len(), |n| model.kernels(&data.samples[n]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<f64> = data.labels.iter().map(|c| c.sign()).collect();
    let mut curve = TrainingCurve::default();
    for epoch in 1..=cfg.epochs {
        let mut grad = vec![0.0; model.s];
        for (k, &t) in kernels.iter().zip(&targets) {
            let r = sign0(t - model.decision_from_kernels(k));
            for (g, kv) in grad.iter_mut().zip(k) {
                *g -= r * kv;
            }
        }
        for (w, g) in model.w.iter_mut().zip(&grad) {
            *w -= cfg.epsilon * g;
        }
        let mut cost = 0.0;
        let mut correct = 0;
        for ((k, &t), &c) in kernels.iter().zip(&targets).zip(&data.labels) {
            let f = model.decision_from_kernels(k);
            cost += (t - f).abs();
            correct += usize::from(Class::from_decision(f) == c);
        }
        curve.points.push(CurvePoint {
            epoch,
            cost,
            acc: correct as f64 / data.len() as f64,
            gammas: Vec::new(),
        });
    }
    Ok((model, curve))
}
