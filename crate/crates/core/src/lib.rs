//! Margin-propagation learning toolkit.
//!
//! Margin propagation replaces multiply-accumulate with a threshold solve:
//! given scores `L_i` and `gamma > 0`, find `z` with
//! `sum_i [L_i - z]_+ = gamma`. Networks built on it need only additions,
//! comparisons and shifts at inference time.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod costmodel;
pub mod data;
pub mod error;
pub mod mlp;
pub mod model;
pub mod mp;
pub mod ops;
pub mod perceptron;
pub mod quantize;
pub mod svm;
pub mod trainer;
pub mod unit;

pub use data::{Class, Dataset};
pub use error::{Error, Result};
pub use mlp::MlpParams;
pub use model::{Classifier, Model, ModelKind};
pub use mp::{mp, mp_grad, output_normalize, rectified_grad, DifferentialValue, DifferentialVector, MpResult};
pub use perceptron::PerceptronParams;
pub use svm::SvmParams;
pub use trainer::{train, TrainConfig, TrainingCurve};
pub use unit::GradRule;
