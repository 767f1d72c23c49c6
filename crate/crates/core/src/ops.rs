//! Operation-counting shadow mode.
//!
//! Forward passes take an [`OpSink`]; the default [`NoCount`] sink compiles
//! away, while [`OpCounter`] tallies every arithmetic primitive so callers can
//! verify that an MP pipeline never multiplies.

use serde::{Deserialize, Serialize};

/// Arithmetic primitives recorded by the shadow counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    /// Data-path addition forming a log-domain term (weight + input).
    Add,
    /// Addition or subtraction inside the water-filling solver.
    SolverAdd,
    Compare,
    Shift,
    /// Division by an active count inside the solver.
    Division,
    Mult,
    /// Anything the encoding stage does outside the MP pipeline
    /// (e.g. building kernel terms from linear-domain coordinates).
    Encoding,
}

pub trait OpSink {
    fn record(&mut self, _op: Op, _n: u64) {}
    /// Called once per solver invocation with the term count and active count.
    fn mp_call(&mut self, _terms: usize, _active: usize) {}
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NoCount;

impl OpSink for NoCount {}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpCounter {
    pub adds: u64,
    pub solver_adds: u64,
    pub compares: u64,
    pub shifts: u64,
    pub divisions: u64,
    pub mults: u64,
    pub encoding_ops: u64,
    pub mp_calls: u64,
    pub mp_terms: u64,
    pub mp_active: u64,
    /// Sum over solver calls of `active / terms`.
    pub active_fraction_sum: f64,
}

impl OpSink for OpCounter {
    fn record(&mut self, op: Op, n: u64) {
        match op {
            Op::Add => self.adds += n,
            Op::SolverAdd => self.solver_adds += n,
            Op::Compare => self.compares += n,
            Op::Shift => self.shifts += n,
            Op::Division => self.divisions += n,
            Op::Mult => self.mults += n,
            Op::Encoding => self.encoding_ops += n,
        }
    }

    fn mp_call(&mut self, terms: usize, active: usize) {
        self.mp_calls += 1;
        self.mp_terms += terms as u64;
        self.mp_active += active as u64;
        if terms > 0 {
            self.active_fraction_sum += active as f64 / terms as f64;
        }
    }
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mean fraction of active terms per solver call; `None` before any call.
    pub fn mean_active_fraction(&self) -> Option<f64> {
        (self.mp_calls > 0).then(|| self.active_fraction_sum / self.mp_calls as f64)
    }
}
