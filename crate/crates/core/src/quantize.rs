//! Fixed-point inference.
//!
//! Parameters and inputs are stored as signed `d`-bit codes with `frac_bits`
//! fractional bits. MP forward passes run on the codes with integer adds,
//! compares and a floor division by the active count; intermediate sums use a
//! 64-bit accumulator.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::baselines::sigmoid;
use crate::data::{Class, Dataset};
use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::model::{Classifier, Model};
use crate::mp::DifferentialValue;
use crate::ops::{NoCount, Op, OpSink};
use crate::perceptron::PerceptronParams;
use crate::trainer::accuracy;

pub const MAX_BITS: u32 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub total_bits: u32,
    pub frac_bits: u32,
}

impl FixedPointFormat {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if !(2..=MAX_BITS).contains(&total_bits) {
            return Err(Error::InvalidFormat(format!("total bits must be in 2..={MAX_BITS}, got {total_bits}")));
        }
        if frac_bits >= total_bits {
            return Err(Error::InvalidFormat(format!(
                "frac bits ({frac_bits}) must be below total bits ({total_bits})"
            )));
        }
        Ok(Self { total_bits, frac_bits })
    }

    /// One sign bit, one integer bit, `d - 2` fractional bits.
    pub fn with_default_frac(total_bits: u32) -> Result<Self> {
        Self::new(total_bits, total_bits.saturating_sub(2))
    }

    pub fn min_code(&self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    pub fn max_code(&self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    pub fn scale(&self) -> f64 {
        (1i64 << self.frac_bits) as f64
    }

    /// Code of the value `1.0`, unsaturated.
    pub fn one(&self) -> i64 {
        1i64 << self.frac_bits
    }

    pub fn min_value(&self) -> f64 {
        self.dequantize(self.min_code())
    }

    pub fn max_value(&self) -> f64 {
        self.dequantize(self.max_code())
    }

    /// Round-half-even of `v * 2^frac`, saturated to the code range.
    pub fn quantize(&self, v: f64) -> i64 {
        if v.is_nan() {
            return 0;
        }
        let r = (v * self.scale()).round_ties_even();
        if r >= self.max_code() as f64 {
            self.max_code()
        } else if r <= self.min_code() as f64 {
            self.min_code()
        } else {
            r as i64
        }
    }

    /// Round-half-even of `v * 2^frac` without saturation, for structural
    /// constants such as gamma that live in the accumulator.
    pub fn quantize_wide(&self, v: f64) -> i64 {
        (v * self.scale()).round_ties_even() as i64
    }

    pub fn dequantize(&self, code: i64) -> f64 {
        code as f64 / self.scale()
    }

    pub fn in_range(&self, code: i64) -> bool {
        (self.min_code()..=self.max_code()).contains(&code)
    }
}

/// Integer MP threshold: sort-based first-m rule with floor division.
pub fn mp_int<S: OpSink>(scores: &[i64], gamma: i64, sink: &mut S) -> Result<i64> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if gamma <= 0 {
        return Err(Error::NonPositiveGamma(gamma as f64));
    }
    Ok(threshold_int(scores, gamma, sink).0)
}

/// Threshold and active count. `scores` must be non-empty, `gamma > 0`.
fn threshold_int<S: OpSink>(scores: &[i64], gamma: i64, sink: &mut S) -> (i64, usize) {
    let n = scores.len();
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(|a, b| {
        sink.record(Op::Compare, 1);
        b.cmp(a)
    });
    let mut prefix = 0i64;
    let mut z = 0;
    for m in 1..=n {
        prefix += sorted[m - 1];
        sink.record(Op::SolverAdd, 2);
        sink.record(Op::Division, 1);
        z = (prefix - gamma).div_euclid(m as i64);
        if m == n {
            break;
        }
        sink.record(Op::Compare, 1);
        if z >= sorted[m] {
            break;
        }
    }
    sink.record(Op::Compare, n as u64);
    let active = scores.iter().filter(|&&l| l > z).count();
    sink.mp_call(n, active);
    (z, active)
}

/// Integer differential neuron; returns `(p+, p-)` codes.
fn unit_forward_int<S: OpSink>(
    w_plus: &[i64],
    w_minus: &[i64],
    bias: (i64, i64),
    gamma: i64,
    one: i64,
    inputs: &[(i64, i64)],
    sink: &mut S,
) -> (i64, i64) {
    let mut plus = Vec::with_capacity(2 * inputs.len() + 1);
    let mut minus = Vec::with_capacity(2 * inputs.len() + 1);
    for ((&wp, &wm), &(up, um)) in w_plus.iter().zip(w_minus).zip(inputs) {
        plus.push(wp + up);
        plus.push(wm + um);
        minus.push(wp + um);
        minus.push(wm + up);
    }
    sink.record(Op::Add, 4 * inputs.len() as u64);
    plus.push(bias.0);
    minus.push(bias.1);
    let (z_plus, _) = threshold_int(&plus, gamma, sink);
    let (z_minus, _) = threshold_int(&minus, gamma, sink);
    let (z, _) = threshold_int(&[z_plus, z_minus], one, sink);
    sink.record(Op::SolverAdd, 2);
    ((z_plus - z).max(0), (z_minus - z).max(0))
}

fn q_vec(fmt: &FixedPointFormat, v: &[f64]) -> Vec<i64> {
    v.iter().map(|&x| fmt.quantize(x)).collect()
}

fn q_mat(fmt: &FixedPointFormat, m: &[Vec<f64>]) -> Vec<Vec<i64>> {
    m.iter().map(|r| q_vec(fmt, r)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedPerceptron {
    pub n: usize,
    pub w_plus: Vec<i64>,
    pub w_minus: Vec<i64>,
    pub b_plus: i64,
    pub b_minus: i64,
    pub gamma: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedMlp {
    pub i: usize,
    pub j: usize,
    pub w_ij_plus: Vec<Vec<i64>>,
    pub w_ij_minus: Vec<Vec<i64>>,
    pub w_jk_plus: Vec<i64>,
    pub w_jk_minus: Vec<i64>,
    pub b_j_plus: Vec<i64>,
    pub b_j_minus: Vec<i64>,
    pub b_k_plus: i64,
    pub b_k_minus: i64,
    pub gamma_j: i64,
    pub gamma_k: i64,
}

/// Conventional MLP with `d`-bit weights. Products are rescaled by an
/// arithmetic right shift; the sigmoid is evaluated on the dequantized
/// pre-activation and requantized, as a lookup table would.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedConvMlp {
    pub i: usize,
    pub j: usize,
    pub w_ji: Vec<Vec<i64>>,
    pub b_j: Vec<i64>,
    pub w_kj: Vec<i64>,
    pub b_k: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum QuantizedParams {
    MpPerceptron(QuantizedPerceptron),
    MpMlp(QuantizedMlp),
    ConvMlp(QuantizedConvMlp),
}

/// Integer parameter tensors plus their format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedModel {
    pub format: FixedPointFormat,
    pub params: QuantizedParams,
}

impl QuantizedModel {
    pub fn from_model(model: &Model, format: FixedPointFormat) -> Result<Self> {
        let f = &format;
        let params = match model {
            Model::MpPerceptron(p) => QuantizedParams::MpPerceptron(quantize_perceptron(p, f)),
            Model::MpMlp(p) => QuantizedParams::MpMlp(quantize_mlp(p, f)),
            Model::ConvMlp(p) => QuantizedParams::ConvMlp(QuantizedConvMlp {
                i: p.i,
                j: p.j,
                w_ji: q_mat(f, &p.w_ji),
                b_j: q_vec(f, &p.b_j),
                w_kj: q_vec(f, &p.w_kj),
                b_k: f.quantize(p.b_k),
            }),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "fixed-point inference supports mp-perceptron, mp-mlp and conv-mlp, got {}",
                    other.kind().name()
                )))
            }
        };
        Ok(Self { format, params })
    }

    pub fn input_dim(&self) -> usize {
        match &self.params {
            QuantizedParams::MpPerceptron(p) => p.n,
            QuantizedParams::MpMlp(p) => p.i,
            QuantizedParams::ConvMlp(p) => p.i,
        }
    }

    /// Every stored parameter code lies in the format's range.
    pub fn codes_in_range(&self) -> bool {
        let f = &self.format;
        let all = |v: &[i64]| v.iter().all(|&c| f.in_range(c));
        match &self.params {
            QuantizedParams::MpPerceptron(p) => {
                all(&p.w_plus) && all(&p.w_minus) && all(&[p.b_plus, p.b_minus])
            }
            QuantizedParams::MpMlp(p) => {
                p.w_ij_plus.iter().chain(&p.w_ij_minus).all(|r| all(r))
                    && all(&p.w_jk_plus)
                    && all(&p.w_jk_minus)
                    && all(&p.b_j_plus)
                    && all(&p.b_j_minus)
                    && all(&[p.b_k_plus, p.b_k_minus])
            }
            QuantizedParams::ConvMlp(p) => p.w_ji.iter().all(|r| all(r)) && all(&p.b_j) && all(&p.w_kj) && all(&[p.b_k]),
        }
    }

    pub fn quantize_input(&self, x: &[DifferentialValue]) -> Result<Vec<(i64, i64)>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(x.iter()
            .map(|v| (self.format.quantize(v.plus), self.format.quantize(v.minus)))
            .collect())
    }

    /// Decision value in codes: `p+ - p-` for MP models, `y - 1/2` for the
    /// conventional MLP.
    pub fn decision_code<S: OpSink>(&self, xq: &[(i64, i64)], sink: &mut S) -> Result<i64> {
        if xq.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: xq.len(),
            });
        }
        let f = &self.format;
        let one = f.one();
        Ok(match &self.params {
            QuantizedParams::MpPerceptron(p) => {
                let (pp, pm) = unit_forward_int(&p.w_plus, &p.w_minus, (p.b_plus, p.b_minus), p.gamma, one, xq, sink);
                pp - pm
            }
            QuantizedParams::MpMlp(p) => {
                let hidden: Vec<(i64, i64)> = (0..p.j)
                    .map(|j| {
                        let wp: Vec<i64> = p.w_ij_plus.iter().map(|r| r[j]).collect();
                        let wm: Vec<i64> = p.w_ij_minus.iter().map(|r| r[j]).collect();
                        unit_forward_int(&wp, &wm, (p.b_j_plus[j], p.b_j_minus[j]), p.gamma_j, one, xq, sink)
                    })
                    .collect();
                let (pp, pm) = unit_forward_int(
                    &p.w_jk_plus,
                    &p.w_jk_minus,
                    (p.b_k_plus, p.b_k_minus),
                    p.gamma_k,
                    one,
                    &hidden,
                    sink,
                );
                pp - pm
            }
            QuantizedParams::ConvMlp(p) => {
                let signed: Vec<i64> = xq.iter().map(|&(up, um)| up - um).collect();
                let fb = f.frac_bits;
                let act = |acc: i64, sink: &mut S| {
                    sink.record(Op::Encoding, 1);
                    f.quantize(sigmoid(f.dequantize(acc)))
                };
                let hidden: Vec<i64> = p
                    .w_ji
                    .iter()
                    .zip(&p.b_j)
                    .map(|(row, &b)| {
                        let acc = row.iter().zip(&signed).map(|(&w, &v)| (w * v) >> fb).sum::<i64>() + b;
                        sink.record(Op::Mult, row.len() as u64);
                        sink.record(Op::Add, row.len() as u64);
                        act(acc, sink)
                    })
                    .collect();
                let acc = p.w_kj.iter().zip(&hidden).map(|(&w, &h)| (w * h) >> fb).sum::<i64>() + p.b_k;
                sink.record(Op::Mult, hidden.len() as u64);
                sink.record(Op::Add, hidden.len() as u64);
                act(acc, sink) - one / 2
            }
        })
    }

    pub fn decision(&self, x: &[DifferentialValue]) -> Result<f64> {
        let xq = self.quantize_input(x)?;
        Ok(self.format.dequantize(self.decision_code(&xq, &mut NoCount)?))
    }
}

impl Classifier for QuantizedModel {
    fn input_dim(&self) -> usize {
        QuantizedModel::input_dim(self)
    }

    fn decision(&self, x: &[DifferentialValue]) -> Result<f64> {
        QuantizedModel::decision(self, x)
    }

    fn predict(&self, x: &[DifferentialValue]) -> Result<Class> {
        let xq = self.quantize_input(x)?;
        Ok(Class::from_decision(self.decision_code(&xq, &mut NoCount)? as f64))
    }
}

fn quantize_perceptron(p: &PerceptronParams, f: &FixedPointFormat) -> QuantizedPerceptron {
    QuantizedPerceptron {
        n: p.n,
        w_plus: q_vec(f, &p.w_plus),
        w_minus: q_vec(f, &p.w_minus),
        b_plus: f.quantize(p.b_plus),
        b_minus: f.quantize(p.b_minus),
        gamma: f.quantize_wide(p.gamma).max(1),
    }
}

fn quantize_mlp(p: &MlpParams, f: &FixedPointFormat) -> QuantizedMlp {
    QuantizedMlp {
        i: p.i,
        j: p.j,
        w_ij_plus: q_mat(f, &p.w_ij_plus),
        w_ij_minus: q_mat(f, &p.w_ij_minus),
        w_jk_plus: q_vec(f, &p.w_jk_plus),
        w_jk_minus: q_vec(f, &p.w_jk_minus),
        b_j_plus: q_vec(f, &p.b_j_plus),
        b_j_minus: q_vec(f, &p.b_j_minus),
        b_k_plus: f.quantize(p.b_k_plus),
        b_k_minus: f.quantize(p.b_k_minus),
        gamma_j: f.quantize_wide(p.gamma_j).max(1),
        gamma_k: f.quantize_wide(p.gamma_k).max(1),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: u32,
    pub accuracy_float: f64,
    pub accuracy_fixed: f64,
}

/// Float and fixed-point accuracy for each bit width in `bits`, using the
/// default fractional split.
pub fn precision_sweep(model: &Model, data: &Dataset, bits: &[u32]) -> Result<Vec<SweepRow>> {
    let accuracy_float = accuracy(model, data)?;
    bits.iter()
        .map(|&d| {
            let q = QuantizedModel::from_model(model, FixedPointFormat::with_default_frac(d)?)?;
            Ok(SweepRow {
                d,
                accuracy_float,
                accuracy_fixed: accuracy(&q, data)?,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["d", "accuracy_float", "accuracy_fixed"])?;
    for r in rows {
        w.write_record([r.d.to_string(), r.accuracy_float.to_string(), r.accuracy_fixed.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
