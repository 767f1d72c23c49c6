//! Operation-count and energy estimates for multiply-accumulate pipelines
//! versus MP pipelines.
//!
//! Primitive costs are in elementary operations (one-bit shifts): an add is
//! `3d`, a multiply `1.5 d^2`, a compare `d` and a shift `1`. All logarithms
//! are base 2 and kept real-valued.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::ops::OpCounter;

/// Energy anchors in pJ: `(bits, add, mult)`.
pub const ENERGY_8BIT: (u32, f64, f64) = (8, 0.03, 0.2);
pub const ENERGY_32BIT: (u32, f64, f64) = (32, 0.1, 3.1);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveCosts {
    pub d: u32,
    pub c_s: f64,
    pub c_a: f64,
    pub c_m: f64,
    pub c_c: f64,
}

impl PrimitiveCosts {
    pub fn for_bits(d: u32) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidCostParams("bit width must be >= 1".into()));
        }
        let d_f = f64::from(d);
        Ok(Self {
            d,
            c_s: 1.0,
            c_a: 3.0 * d_f,
            c_m: 1.5 * d_f * d_f,
            c_c: d_f,
        })
    }
}

/// Energy per add and per multiply at `d` bits, plus whether the values were
/// extrapolated from the 8- and 32-bit anchors (adds linear in `d`,
/// multiplies quadratic in `d`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub d: u32,
    pub add_pj: f64,
    pub mult_pj: f64,
    pub extrapolated: bool,
}

impl EnergyModel {
    pub fn at_bits(d: u32) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidCostParams("bit width must be >= 1".into()));
        }
        let (d8, a8, m8) = ENERGY_8BIT;
        let (d32, a32, m32) = ENERGY_32BIT;
        let (add_pj, mult_pj, extrapolated) = if d == d8 {
            (a8, m8, false)
        } else if d == d32 {
            (a32, m32, false)
        } else {
            let x = f64::from(d);
            let (x8, x32) = (f64::from(d8), f64::from(d32));
            let add = a8 + (a32 - a8) * (x - x8) / (x32 - x8);
            let slope = (m32 - m8) / (x32 * x32 - x8 * x8);
            let mult = m8 + slope * (x * x - x8 * x8);
            (add.max(0.0), mult.max(0.0), true)
        };
        Ok(Self {
            d,
            add_pj,
            mult_pj,
            extrapolated,
        })
    }

    /// Compares and shifts are priced as adds; activation evaluations
    /// (`other`) carry no energy.
    pub fn energy_pj(&self, counts: &OpCounts) -> f64 {
        (counts.adds + counts.compares + counts.shifts) * self.add_pj + counts.mults * self.mult_pj
    }
}

/// Primitive counts; real-valued because sparsity terms are `F log2(n)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpCounts {
    pub adds: f64,
    pub mults: f64,
    pub compares: f64,
    pub shifts: f64,
    /// Unit-cost operations such as activation function evaluations.
    pub other: f64,
}

impl std::ops::Add for OpCounts {
    type Output = OpCounts;

    fn add(self, o: OpCounts) -> OpCounts {
        OpCounts {
            adds: self.adds + o.adds,
            mults: self.mults + o.mults,
            compares: self.compares + o.compares,
            shifts: self.shifts + o.shifts,
            other: self.other + o.other,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub adds: f64,
    pub mults: f64,
    pub compares: f64,
    pub shifts: f64,
    pub other: f64,
}

impl Breakdown {
    pub fn total(&self) -> f64 {
        self.adds + self.mults + self.compares + self.shifts + self.other
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub d: u32,
    pub counts: OpCounts,
    /// Elementary operations contributed by each primitive.
    pub breakdown: Breakdown,
    pub elementary_ops: f64,
    pub energy_pj: f64,
    pub energy_extrapolated: bool,
}

impl CostReport {
    pub fn new(counts: OpCounts, d: u32) -> Result<Self> {
        let c = PrimitiveCosts::for_bits(d)?;
        let e = EnergyModel::at_bits(d)?;
        let breakdown = Breakdown {
            adds: counts.adds * c.c_a,
            mults: counts.mults * c.c_m,
            compares: counts.compares * c.c_c,
            shifts: counts.shifts * c.c_s,
            other: counts.other,
        };
        Ok(Self {
            d,
            counts,
            elementary_ops: breakdown.total(),
            breakdown,
            energy_pj: e.energy_pj(&counts),
            energy_extrapolated: e.extrapolated,
        })
    }
}

fn positive(name: &str, v: usize) -> Result<f64> {
    if v == 0 {
        return Err(Error::InvalidCostParams(format!("{name} must be >= 1")));
    }
    Ok(v as f64)
}

fn sparsity(f: f64) -> Result<f64> {
    if !(f >= 0.0) || !f.is_finite() {
        return Err(Error::InvalidCostParams(format!("sparsity factor must be finite and >= 0, got {f}")));
    }
    Ok(f)
}

/// `N` multiplies and `N` adds.
pub fn mvm_cost(n: usize, d: u32) -> Result<CostReport> {
    let n = positive("N", n)?;
    CostReport::new(
        OpCounts {
            adds: n,
            mults: n,
            ..Default::default()
        },
        d,
    )
}

/// `N` adds and `F log2(N)` compares.
pub fn mp_cost(n: usize, f: f64, d: u32) -> Result<CostReport> {
    let n = positive("N", n)?;
    let f = sparsity(f)?;
    CostReport::new(
        OpCounts {
            adds: n,
            compares: f * n.log2(),
            ..Default::default()
        },
        d,
    )
}

/// Conventional three-layer MLP training with one output, summed over `T`
/// samples.
pub fn mlp_train_cost_conventional(i: usize, j: usize, t: usize, d: u32) -> Result<CostReport> {
    let (i, j, t) = (positive("I", i)?, positive("J", j)?, positive("T", t)?);
    CostReport::new(
        OpCounts {
            adds: 3.0 * j * t + 2.0 * j * i * t + j * i + j + t,
            mults: 3.0 * j * t + 2.0 * j * i * t + j * t + t,
            other: j * t + t,
            ..Default::default()
        },
        d,
    )
}

/// MP MLP training with one differential output.
pub fn mlp_train_cost_mp(i: usize, j: usize, t: usize, f: f64, d: u32) -> Result<CostReport> {
    let (i, j, t) = (positive("I", i)?, positive("J", j)?, positive("T", t)?);
    let f = sparsity(f)?;
    CostReport::new(
        OpCounts {
            adds: 8.0 * j * i * t + 4.0 * j * t + 8.0 * t + 2.0 * j + 2.0 * j * i,
            compares: 2.0 * j * t * f * (2.0 * i).log2()
                + 2.0 * t * f * (2.0 * j).log2()
                + 4.0 * j * i * t
                + 6.0 * j * t
                + 2.0 * t,
            shifts: 8.0 * j * t + 8.0 * j * i * t,
            ..Default::default()
        },
        d,
    )
}

pub fn mlp_infer_cost_conventional(i: usize, j: usize, d: u32) -> Result<CostReport> {
    let (i, j) = (positive("I", i)?, positive("J", j)?);
    CostReport::new(
        OpCounts {
            adds: j * i + j,
            mults: j * i + j,
            other: j,
            ..Default::default()
        },
        d,
    )
}

pub fn mlp_infer_cost_mp(i: usize, j: usize, f: f64, d: u32) -> Result<CostReport> {
    let (i, j) = (positive("I", i)?, positive("J", j)?);
    let f = sparsity(f)?;
    CostReport::new(
        OpCounts {
            adds: 4.0 * j * i + 4.0 * j,
            compares: 2.0 * j * f * (2.0 * i).log2() + 2.0 * f * (2.0 * j).log2(),
            ..Default::default()
        },
        d,
    )
}

/// Kernel machine with `S` support vectors.
pub fn svm_infer_cost_conventional(s: usize, d: u32) -> Result<CostReport> {
    let s = positive("S", s)?;
    CostReport::new(
        OpCounts {
            adds: s,
            mults: s,
            ..Default::default()
        },
        d,
    )
}

pub fn svm_infer_cost_mp(s: usize, f: f64, d: u32) -> Result<CostReport> {
    let s = positive("S", s)?;
    let f = sparsity(f)?;
    CostReport::new(
        OpCounts {
            adds: 2.0 * s,
            compares: f * (2.0 * s).log2(),
            ..Default::default()
        },
        d,
    )
}

/// Runs `model` over `data` with an operation counter attached.
pub fn count_ops(model: &Model, data: &Dataset) -> Result<OpCounter> {
    let mut counter = OpCounter::new();
    for x in &data.samples {
        match model {
            Model::MpPerceptron(p) => {
                p.forward_traced(x, &mut counter)?;
            }
            Model::MpMlp(p) => {
                p.forward_traced(x, &mut counter)?;
            }
            Model::MpSvm(p) => {
                p.decision_traced(x, &mut counter)?;
            }
            Model::ConvMlp(_) | Model::ConvSvm(_) => {
                return Err(Error::InvalidConfig(format!(
                    "operation counting needs an MP model, got {}",
                    model.kind().name()
                )))
            }
        }
    }
    Ok(counter)
}

/// Mean fraction of active terms per solver call over one pass of `data`.
pub fn measure_sparsity(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    count_ops(model, data)?
        .mean_active_fraction()
        .ok_or_else(|| Error::InvalidConfig("model made no solver calls".into()))
}
