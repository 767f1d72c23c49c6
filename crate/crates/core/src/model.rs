//! Common prediction interface and the serialized model container.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{ConvMlpParams, ConvSvmParams};
use crate::data::Class;
use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::mp::DifferentialValue;
use crate::perceptron::PerceptronParams;
use crate::svm::SvmParams;

pub trait Classifier {
    fn input_dim(&self) -> usize;

    /// Signed score; non-negative means class+.
    fn decision(&self, x: &[DifferentialValue]) -> Result<f64>;

    fn predict(&self, x: &[DifferentialValue]) -> Result<Class> {
        Ok(Class::from_decision(self.decision(x)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    MpPerceptron,
    MpMlp,
    MpSvm,
    ConvMlp,
    ConvSvm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::MpPerceptron,
        ModelKind::MpMlp,
        ModelKind::MpSvm,
        ModelKind::ConvMlp,
        ModelKind::ConvSvm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::MpPerceptron => "mp-perceptron",
            ModelKind::MpMlp => "mp-mlp",
            ModelKind::MpSvm => "mp-svm",
            ModelKind::ConvMlp => "conv-mlp",
            ModelKind::ConvSvm => "conv-svm",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model {s:?}")))
    }
}

/// Any trained model, serialized as its parameter object plus a `model` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Model {
    MpPerceptron(PerceptronParams),
    MpMlp(MlpParams),
    MpSvm(SvmParams),
    ConvMlp(ConvMlpParams),
    ConvSvm(ConvSvmParams),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::MpPerceptron(_) => ModelKind::MpPerceptron,
            Model::MpMlp(_) => ModelKind::MpMlp,
            Model::MpSvm(_) => ModelKind::MpSvm,
            Model::ConvMlp(_) => ModelKind::ConvMlp,
            Model::ConvSvm(_) => ModelKind::ConvSvm,
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            Model::MpPerceptron(p) => p,
            Model::MpMlp(p) => p,
            Model::MpSvm(p) => p,
            Model::ConvMlp(p) => p,
            Model::ConvSvm(p) => p,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        let model: Model = serde_json::from_reader(BufReader::new(file))?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::MpPerceptron(p) => p.validate(),
            Model::MpMlp(p) => p.validate(),
            Model::MpSvm(p) => p.validate(),
            Model::ConvMlp(p) => p.validate(),
            Model::ConvSvm(p) => p.validate(),
        }
    }
}

impl Classifier for Model {
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }

    fn decision(&self, x: &[DifferentialValue]) -> Result<f64> {
        self.inner().decision(x)
    }

    fn predict(&self, x: &[DifferentialValue]) -> Result<Class> {
        self.inner().predict(x)
    }
}
