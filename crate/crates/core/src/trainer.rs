//! Subgradient-descent training loop shared by the MP models.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines;
use crate::data::{Class, Dataset};
use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::model::{Classifier, Model, ModelKind};
use crate::mp::DifferentialValue;
use crate::ops::{NoCount, OpSink};
use crate::perceptron::PerceptronParams;
use crate::svm::SvmParams;
use crate::unit::GradRule;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "MARGINPROP_SEED";

/// A model trained by flat-vector subgradient descent on the L1 loss.
pub trait Trainable: Clone + Send + Sync {
    /// Per-sample input after any parameter-independent preprocessing.
    type Prepared: Send + Sync;

    fn prepare(&self, x: &[DifferentialValue]) -> Result<Self::Prepared>;

    /// Normalized output pair `(p+, p-)`.
    fn output_pair<S: OpSink>(&self, input: &Self::Prepared, sink: &mut S) -> Result<(f64, f64)>;

    /// Per-sample L1 subgradient, laid out like [`Trainable::params_flat`].
    fn sample_grad(&self, input: &Self::Prepared, y_plus: f64, rule: GradRule) -> Result<Vec<f64>>;

    fn params_flat(&self) -> Vec<f64>;

    fn set_params_flat(&mut self, flat: &[f64]);

    /// The gammas subject to annealing and grid search.
    fn gammas(&self) -> Vec<f64>;

    fn set_gammas(&mut self, gammas: &[f64]);
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Value", into = "Value")]
pub enum Batch {
    #[default]
    Full,
    Size(usize),
}

impl TryFrom<Value> for Batch {
    type Error = String;

    fn try_from(v: Value) -> std::result::Result<Self, String> {
        match &v {
            Value::String(s) if s == "full" => Ok(Batch::Full),
            Value::Number(n) => match n.as_u64() {
                Some(k) if k > 0 => Ok(Batch::Size(k as usize)),
                _ => Err(format!("batch size must be a positive integer, got {n}")),
            },
            _ => Err(format!("batch must be \"full\" or a positive integer, got {v}")),
        }
    }
}

impl From<Batch> for Value {
    fn from(b: Batch) -> Value {
        match b {
            Batch::Full => Value::String("full".into()),
            Batch::Size(k) => Value::from(k),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaInit {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Learning rate.
    pub epsilon: f64,
    /// Starting gammas; model defaults when absent.
    pub gamma_init: Option<GammaInit>,
    pub anneal: bool,
    pub anneal_step: f64,
    /// Replace annealing by a 13-point log grid over `[0.1, 10]`.
    pub grid_search: bool,
    pub seed: u64,
    pub batch: Batch,
    pub grad_rule: GradRule,
    /// Hidden width for MLPs.
    pub hidden: usize,
    /// MLP weights start uniform in `[0, mlp_weight_range]`; biases in `[0, 1]`.
    pub mlp_weight_range: f64,
    /// Kernel-level gamma for the MP kernel machine.
    pub gamma2: f64,
    /// Cauchy constant for both kernel machines.
    pub c: f64,
    /// Worker threads for per-sample gradients; 1 runs inline.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            epsilon: 0.01,
            gamma_init: None,
            anneal: true,
            anneal_step: 0.05,
            grid_search: false,
            seed: 0,
            batch: Batch::Full,
            grad_rule: GradRule::Exact,
            hidden: 30,
            mlp_weight_range: 0.3,
            gamma2: 5.0,
            c: 1.0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.anneal && !(self.anneal_step > 0.0) {
            return bad(format!("anneal_step must be positive, got {}", self.anneal_step));
        }
        if self.hidden == 0 {
            return bad("hidden must be at least 1".into());
        }
        for (name, v) in [("gamma2", self.gamma2), ("c", self.c), ("mlp_weight_range", self.mlp_weight_range)] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(g) = self.gamma_list() {
            if let Some(v) = g.iter().find(|v| !(**v > 0.0)) {
                return Err(Error::NonPositiveGamma(*v));
            }
        }
        Ok(())
    }

    fn gamma_list(&self) -> Option<Vec<f64>> {
        match &self.gamma_init {
            None => None,
            Some(GammaInit::One(g)) => Some(vec![*g]),
            Some(GammaInit::Many(g)) => Some(g.clone()),
        }
    }

    /// `gamma_init` expanded to `count` values, or `defaults`.
    pub fn gammas_or(&self, defaults: &[f64]) -> Result<Vec<f64>> {
        match self.gamma_list() {
            None => Ok(defaults.to_vec()),
            Some(g) if g.len() == 1 => Ok(vec![g[0]; defaults.len()]),
            Some(g) if g.len() == defaults.len() => Ok(g),
            Some(g) => Err(Error::InvalidConfig(format!(
                "gamma_init has {} values, model uses {}",
                g.len(),
                defaults.len()
            ))),
        }
    }

    /// Defaults tuned per model kind. Kernel machines sum one gradient term
    /// per center and take a smaller learning rate.
    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::MpSvm => Self {
                epsilon: 0.001,
                ..Self::default()
            },
            ModelKind::ConvSvm => Self {
                epsilon: 1e-4,
                ..Self::default()
            },
            _ => Self::default(),
        }
    }

    /// Parses JSON or `key = value` lines (`#` starts a comment). Values
    /// that parse as JSON keep their type; anything else is a string.
    /// Missing keys take [`TrainConfig::default`].
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_over(&Self::default(), text)
    }

    /// Like [`TrainConfig::parse`], with missing keys from [`TrainConfig::for_kind`].
    pub fn parse_for(kind: ModelKind, text: &str) -> Result<Self> {
        Self::parse_over(&Self::for_kind(kind), text)
    }

    fn parse_over(base: &Self, text: &str) -> Result<Self> {
        let invalid = |e: serde_json::Error| Error::InvalidConfig(e.to_string());
        let trimmed = text.trim_start();
        let overrides = if trimmed.starts_with('{') {
            match serde_json::from_str(trimmed).map_err(invalid)? {
                Value::Object(map) => map,
                _ => return Err(Error::InvalidConfig("config must be a JSON object".into())),
            }
        } else {
            let mut map = serde_json::Map::new();
            for (no, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key=value", no + 1)))?;
                let v = v.trim();
                let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
                map.insert(k.trim().to_string(), value);
            }
            map
        };
        let Value::Object(mut merged) = serde_json::to_value(base).map_err(invalid)? else {
            unreachable!("TrainConfig serializes to an object")
        };
        for (k, v) in overrides {
            if !merged.contains_key(&k) {
                return Err(Error::InvalidConfig(format!("unknown config key `{k}`")));
            }
            merged.insert(k, v);
        }
        let cfg: Self = serde_json::from_value(Value::Object(merged)).map_err(invalid)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        Self::parse(&text)
    }

    /// Applies the seed override from [`SEED_ENV`], if set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
        }
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub cost: f64,
    pub acc: f64,
    pub gammas: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub points: Vec<CurvePoint>,
}

impl TrainingCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&CurvePoint> {
        self.points.last()
    }

    /// CSV with header `epoch,cost,acc,gammas`; gammas are `;`-separated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "cost", "acc", "gammas"])?;
        for p in &self.points {
            let g: Vec<String> = p.gammas.iter().map(|g| g.to_string()).collect();
            w.write_record([p.epoch.to_string(), p.cost.to_string(), p.acc.to_string(), g.join(";")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `E = sum_n |y+ - p+| + |y- - p-|`.
pub fn l1_cost(predictions: &[(f64, f64)], labels: &[(f64, f64)]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch(predictions.len(), labels.len()));
    }
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|((pp, pm), (yp, ym))| (yp - pp).abs() + (ym - pm).abs())
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub overall: f64,
    pub plus: Option<f64>,
    pub minus: Option<f64>,
    pub n: usize,
}

impl Evaluation {
    pub fn to_json(&self) -> Value {
        let mut per_class = serde_json::Map::new();
        for (k, v) in [("plus", self.plus), ("minus", self.minus)] {
            per_class.insert(k.into(), v.map_or(Value::Null, Value::from));
        }
        serde_json::json!({ "n": self.n, "overall": self.overall, "per_class": per_class })
    }
}

fn tally(predicted: &[Class], labels: &[Class]) -> Evaluation {
    let mut hits: BTreeMap<Class, (usize, usize)> = BTreeMap::new();
    for (p, y) in predicted.iter().zip(labels) {
        let e = hits.entry(*y).or_default();
        e.1 += 1;
        if p == y {
            e.0 += 1;
        }
    }
    let correct: usize = hits.values().map(|h| h.0).sum();
    let rate = |c: Class| hits.get(&c).map(|&(k, n)| k as f64 / n as f64);
    Evaluation {
        overall: correct as f64 / labels.len() as f64,
        plus: rate(Class::Plus),
        minus: rate(Class::Minus),
        n: labels.len(),
    }
}

/// Overall and per-class accuracy under the model's prediction rule.
pub fn evaluate<C: Classifier + ?Sized>(model: &C, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predicted = data
        .samples
        .iter()
        .map(|x| model.predict(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(tally(&predicted, &data.labels))
}

pub fn accuracy<C: Classifier + ?Sized>(model: &C, data: &Dataset) -> Result<f64> {
    Ok(evaluate(model, data)?.overall)
}

/// Runs `f` over `0..n` inline or on `pool`, returning results in index order.
pub(crate) fn map_indexed<T, F>(pool: Option<&rayon::ThreadPool>, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match pool {
        Some(p) => p.install(|| (0..n).into_par_iter().map(&f).collect()),
        None => (0..n).map(f).collect(),
    }
}

pub(crate) fn make_pool(threads: usize) -> Result<Option<rayon::ThreadPool>> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

struct Prepared<'a, M: Trainable> {
    inputs: Vec<M::Prepared>,
    y_plus: Vec<f64>,
    labels: &'a [Class],
    pool: Option<rayon::ThreadPool>,
}

impl<M: Trainable> Prepared<'_, M> {
    /// Training cost and accuracy for `model`.
    fn score(&self, model: &M) -> Result<(f64, f64)> {
        let pairs = map_indexed(self.pool.as_ref(), self.inputs.len(), |i| {
            model.output_pair(&self.inputs[i], &mut NoCount)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let labels: Vec<(f64, f64)> = self.y_plus.iter().map(|&y| (y, 1.0 - y)).collect();
        let cost = l1_cost(&pairs, &labels)?;
        let predicted: Vec<Class> = pairs.iter().map(|&(p, m)| Class::from_pair(p, m)).collect();
        Ok((cost, tally(&predicted, self.labels).overall))
    }

    /// Summed subgradient over the samples in `idx`, accumulated in order.
    fn gradient(&self, model: &M, idx: &[usize], rule: GradRule) -> Result<Vec<f64>> {
        let per_sample = map_indexed(self.pool.as_ref(), idx.len(), |k| {
            model.sample_grad(&self.inputs[idx[k]], self.y_plus[idx[k]], rule)
        });
        let mut total: Option<Vec<f64>> = None;
        for g in per_sample {
            let g = g?;
            match &mut total {
                None => total = Some(g),
                Some(t) => t.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            }
        }
        Ok(total.unwrap_or_default())
    }
}

/// Greedy coordinate annealing: each gamma tries `+step`, then `-step`
/// (skipped when it would leave less than half a step); a move is kept only
/// if the cost drops.
fn anneal_step<M: Trainable>(model: &mut M, data: &Prepared<'_, M>, step: f64, current: (f64, f64)) -> Result<(f64, f64)> {
    let mut best = current;
    let mut gammas = model.gammas();
    for k in 0..gammas.len() {
        for delta in [step, -step] {
            let candidate = gammas[k] + delta;
            if candidate < 0.5 * step {
                continue;
            }
            let mut trial = gammas.clone();
            trial[k] = candidate;
            let mut m = model.clone();
            m.set_gammas(&trial);
            let scored = data.score(&m)?;
            if scored.0 < best.0 {
                best = scored;
                gammas = trial;
                *model = m;
                break;
            }
        }
    }
    Ok(best)
}

/// Mixed into the seed for the mini-batch shuffle so it does not replay the
/// initialization stream.
const SHUFFLE_STREAM: u64 = 0x5eed_5407;

/// Mini-batches are drawn from a fresh seeded permutation every epoch; full
/// batches keep dataset order.
fn descend<M: Trainable>(mut model: M, data: &Prepared<'_, M>, cfg: &TrainConfig, anneal: bool) -> Result<(M, TrainingCurve)> {
    let n = data.inputs.len();
    let batch = match cfg.batch {
        Batch::Full => n,
        Batch::Size(k) => k.min(n),
    };
    let mut curve = TrainingCurve::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    for epoch in 1..=cfg.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        for idx in order.chunks(batch) {
            let g = data.gradient(&model, idx, cfg.grad_rule)?;
            let mut flat = model.params_flat();
            flat.iter_mut().zip(&g).for_each(|(w, g)| *w -= cfg.epsilon * g);
            model.set_params_flat(&flat);
        }
        let mut scored = data.score(&model)?;
        if anneal {
            scored = anneal_step(&mut model, data, cfg.anneal_step, scored)?;
        }
        curve.points.push(CurvePoint {
            epoch,
            cost: scored.0,
            acc: scored.1,
            gammas: model.gammas(),
        });
    }
    Ok((model, curve))
}

/// The 13-point log-spaced gamma grid over `[0.1, 10]`.
pub fn gamma_grid() -> Vec<f64> {
    (0..13).map(|k| 10f64.powf(-1.0 + k as f64 / 6.0)).collect()
}

/// Trains `init` on `data`. With `grid_search`, every grid gamma (applied to
/// all of the model's gammas) is trained from the same start and the run
/// with the lowest final cost wins.
pub fn train_model<M: Trainable>(init: M, data: &Dataset, cfg: &TrainConfig) -> Result<(M, TrainingCurve)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let inputs = data
        .samples
        .iter()
        .map(|x| init.prepare(x))
        .collect::<Result<Vec<_>>>()?;
    let prepared = Prepared::<M> {
        inputs,
        y_plus: data.labels.iter().map(|c| c.y_plus()).collect(),
        labels: &data.labels,
        pool: make_pool(cfg.threads)?,
    };
    if !cfg.grid_search {
        return descend(init, &prepared, cfg, cfg.anneal);
    }
    let mut best: Option<(M, TrainingCurve)> = None;
    for g in gamma_grid() {
        let mut start = init.clone();
        start.set_gammas(&vec![g; init.gammas().len()]);
        let run = descend(start, &prepared, cfg, false)?;
        let cost = run.1.last().map_or(f64::INFINITY, |p| p.cost);
        if best.as_ref().is_none_or(|b| cost < b.1.last().map_or(f64::INFINITY, |p| p.cost)) {
            best = Some(run);
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Seeded initial parameters for an MP model.
pub fn init_perceptron(data: &Dataset, cfg: &TrainConfig) -> Result<PerceptronParams> {
    let g = cfg.gammas_or(&[1.0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(PerceptronParams::random(data.dim, g[0], &mut rng))
}

pub fn init_mlp(data: &Dataset, cfg: &TrainConfig) -> Result<MlpParams> {
    let g = cfg.gammas_or(&[1.0, 1.0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(MlpParams::random_with_range(
        data.dim,
        cfg.hidden,
        g[0],
        g[1],
        cfg.mlp_weight_range,
        &mut rng,
    ))
}

pub fn init_svm(data: &Dataset, cfg: &TrainConfig) -> Result<SvmParams> {
    let g = cfg.gammas_or(&[0.5])?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    SvmParams::from_centers(&data.samples, g[0], cfg.gamma2, cfg.c, &mut rng)
}

/// Builds, trains and wraps any supported model.
pub fn train(kind: ModelKind, data: &Dataset, cfg: &TrainConfig) -> Result<(Model, TrainingCurve)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(match kind {
        ModelKind::MpPerceptron => {
            let (m, c) = train_model(init_perceptron(data, cfg)?, data, cfg)?;
            (Model::MpPerceptron(m), c)
        }
        ModelKind::MpMlp => {
            let (m, c) = train_model(init_mlp(data, cfg)?, data, cfg)?;
            (Model::MpMlp(m), c)
        }
        ModelKind::MpSvm => {
            let (m, c) = train_model(init_svm(data, cfg)?, data, cfg)?;
            (Model::MpSvm(m), c)
        }
        ModelKind::ConvMlp => {
            let (m, c) = baselines::conv_mlp_train(data, cfg)?;
            (Model::ConvMlp(m), c)
        }
        ModelKind::ConvSvm => {
            let (m, c) = baselines::conv_svm_train(data, cfg)?;
            (Model::ConvSvm(m), c)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_cost_examples() {
        assert_eq!(l1_cost(&[(1.0, 0.0)], &[(1.0, 0.0)]).unwrap(), 0.0);
        assert_eq!(l1_cost(&[(0.5, 0.5)], &[(1.0, 0.0)]).unwrap(), 1.0);
        assert!(matches!(l1_cost(&[], &[(1.0, 0.0)]), Err(Error::LengthMismatch(0, 1))));
    }

    #[test]
    fn config_formats() {
        let a = TrainConfig::parse("epochs = 3\nepsilon=0.5 # lr\nbatch=full\ngamma_init=[1, 2]\n").unwrap();
        assert_eq!(a.epochs, 3);
        assert_eq!(a.epsilon, 0.5);
        assert_eq!(a.gamma_init, Some(GammaInit::Many(vec![1.0, 2.0])));
        let b = TrainConfig::parse(r#"{"epochs": 3, "batch": 16, "grad_rule": "as-printed"}"#).unwrap();
        assert_eq!(b.batch, Batch::Size(16));
        assert_eq!(b.grad_rule, GradRule::AsPrinted);
        assert!(TrainConfig::parse("epochs=0").is_err());
        assert!(TrainConfig::parse("bogus=1").is_err());
        assert!(TrainConfig::parse("batch=0").is_err());
    }

    #[test]
    fn gamma_grid_spans_decades() {
        let g = gamma_grid();
        assert_eq!(g.len(), 13);
        assert!((g[0] - 0.1).abs() < 1e-12 && (g[6] - 1.0).abs() < 1e-12 && (g[12] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn tally_by_hand() {
        use Class::*;
        let pred = [Plus, Plus, Minus, Minus, Plus, Minus, Plus, Plus, Minus, Minus];
        let truth = [Plus, Minus, Minus, Minus, Plus, Plus, Plus, Minus, Minus, Plus];
        let e = tally(&pred, &truth);
        assert_eq!(e.overall, 0.6);
        assert_eq!(e.plus, Some(0.6));
        assert_eq!(e.minus, Some(0.6));
    }
}
