//! Datasets, synthetic generators, CSV ingestion and differential encoding.
//!
//! Every feature is min–max scaled to `[0, 1]` and carried as the pair
//! `(v, 1 - v)`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::mp::DifferentialValue;

const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Plus,
    Minus,
}

impl Class {
    /// Class+ iff `p+ >= p-`.
    pub fn from_pair(p_plus: f64, p_minus: f64) -> Self {
        if p_plus >= p_minus {
            Class::Plus
        } else {
            Class::Minus
        }
    }

    pub fn from_decision(f: f64) -> Self {
        Self::from_pair(f, 0.0)
    }

    /// `y+`; `y- = 1 - y+`.
    pub fn y_plus(self) -> f64 {
        match self {
            Class::Plus => 1.0,
            Class::Minus => 0.0,
        }
    }

    /// `+1` / `-1` target for real-valued decision functions.
    pub fn sign(self) -> f64 {
        match self {
            Class::Plus => 1.0,
            Class::Minus => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Plus => "plus",
            Class::Minus => "minus",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub dim: usize,
    pub samples: Vec<Vec<DifferentialValue>>,
    pub labels: Vec<Class>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<Vec<DifferentialValue>>, labels: Vec<Class>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::LengthMismatch(samples.len(), labels.len()));
        }
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = samples[0].len();
        for s in &samples {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: s.len(),
                });
            }
            if let Some((d, v)) = s.iter().enumerate().find(|(_, v)| !v.is_normalized(NORM_TOL)) {
                return Err(Error::NotNormalized {
                    dim: d,
                    plus: v.plus,
                    minus: v.minus,
                });
            }
        }
        Ok(Self {
            name: name.into(),
            dim,
            samples,
            labels,
        })
    }

    /// Builds a dataset from rows of values already scaled to `[0, 1]`.
    pub fn from_unit_rows(name: impl Into<String>, rows: &[Vec<f64>], labels: Vec<Class>) -> Result<Self> {
        let samples = rows.iter().map(|r| encode_row(r)).collect();
        Self::new(name, samples, labels)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(y+, y-)` per sample.
    pub fn label_pairs(&self) -> Vec<(f64, f64)> {
        self.labels.iter().map(|c| (c.y_plus(), 1.0 - c.y_plus())).collect()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let plus = self.labels.iter().filter(|&&c| c == Class::Plus).count();
        (plus, self.labels.len() - plus)
    }

    /// `plus` components as plain feature rows.
    pub fn unit_rows(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| decode_row(s)).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(self.name.clone(), samples, labels)
    }
}

pub fn encode_row(values: &[f64]) -> Vec<DifferentialValue> {
    values.iter().map(|&v| DifferentialValue::from_unit(v)).collect()
}

pub fn decode_row(values: &[DifferentialValue]) -> Vec<f64> {
    values.iter().map(|v| v.plus).collect()
}

/// Per-feature min–max statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub scheme: String,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl EncodingSpec {
    pub const SCHEME: &'static str = "minmax-differential";

    /// Fits on `rows`; a constant feature gets `max = min + 1`.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let mut min = first.clone();
        let mut max = first.clone();
        for r in rows {
            if r.len() != min.len() {
                return Err(Error::DimensionMismatch {
                    expected: min.len(),
                    actual: r.len(),
                });
            }
            for (k, &v) in r.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        for (lo, hi) in min.iter().zip(max.iter_mut()) {
            if *hi <= *lo {
                *hi = *lo + 1.0;
            }
        }
        Ok(Self {
            scheme: Self::SCHEME.into(),
            min,
            max,
        })
    }

    /// Scales into `[0, 1]`, clipping values outside the fitted range.
    pub fn scale(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    }

    pub fn encode(&self, row: &[f64]) -> Vec<DifferentialValue> {
        encode_row(&self.scale(row))
    }

    pub fn decode(&self, x: &[DifferentialValue]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (&lo, &hi))| lo + v.plus * (hi - lo))
            .collect()
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const XOR_SIGMA: f64 = 0.08;

const XOR_QUADRANTS: [([f64; 2], Class); 4] = [
    ([0.25, 0.25], Class::Plus),
    ([0.25, 0.75], Class::Minus),
    ([0.75, 0.75], Class::Plus),
    ([0.75, 0.25], Class::Minus),
];

/// Four Gaussian blobs (sigma 0.08, clipped to the unit square); class+ on
/// the main diagonal. Sample `i` comes from quadrant `i mod 4`.
pub fn gen_xor(n: usize, seed: u64) -> Result<Dataset> {
    if n < 4 {
        return Err(Error::InvalidConfig(format!("xor needs at least 4 samples, got {n}")));
    }
    let mut rng = rng_for(seed);
    let noise = Normal::new(0.0, XOR_SIGMA).expect("valid sigma");
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (center, class) = XOR_QUADRANTS[i % 4];
        rows.push(
            center
                .iter()
                .map(|&c| (c + noise.sample(&mut rng)).clamp(0.0, 1.0))
                .collect::<Vec<_>>(),
        );
        labels.push(class);
    }
    Dataset::from_unit_rows("xor", &rows, labels)
}

pub const SEPARABLE_SIGMA: f64 = 0.06;
/// Distance between the two cluster means.
pub const SEPARABLE_MEAN_GAP: f64 = 0.4;

/// Two Gaussian clusters in the unit square whose means are
/// `SEPARABLE_MEAN_GAP` apart along a seeded random direction. Points outside
/// the square or closer than one sigma to (or beyond) the bisecting line are
/// redrawn, so the midline separates the classes with a margin.
pub fn gen_separable(n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("separable data needs at least 2 samples, got {n}")));
    }
    let mut rng = rng_for(seed);
    let angle = rng.random::<f64>() * std::f64::consts::TAU;
    let dir = [angle.cos(), angle.sin()];
    let half = SEPARABLE_MEAN_GAP / 2.0;
    let noise = Normal::new(0.0, SEPARABLE_SIGMA).expect("valid sigma");
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = if i % 2 == 0 { Class::Plus } else { Class::Minus };
        let side = class.sign();
        loop {
            let p = [
                0.5 + side * half * dir[0] + noise.sample(&mut rng),
                0.5 + side * half * dir[1] + noise.sample(&mut rng),
            ];
            let proj = (p[0] - 0.5) * dir[0] + (p[1] - 0.5) * dir[1];
            let inside = p.iter().all(|v| (0.0..=1.0).contains(v));
            if inside && side * proj >= SEPARABLE_SIGMA {
                rows.push(p.to_vec());
                labels.push(class);
                break;
            }
        }
    }
    Dataset::from_unit_rows("separable", &rows, labels)
}

/// Stratified index split; each class is shuffled with `seed` and the first
/// `round(train_fraction * count)` go to training. Indices come back sorted.
pub fn stratified_indices(labels: &[Class], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let mut rng = rng_for(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [Class::Plus, Class::Minus] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let k = (train_fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = stratified_indices(&data.labels, train_fraction, seed)?;
    Ok((data.subset(&train)?, data.subset(&test)?))
}

/// Generates `n_train + n_test` points from `generator` and splits them.
pub fn generate_split(
    generator: fn(usize, u64) -> Result<Dataset>,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let all = generator(n_train + n_test, seed)?;
    let frac = n_train as f64 / (n_train + n_test) as f64;
    stratified_split(&all, frac, seed)
}

/// Describes how to read a raw CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub name: String,
    pub label_column: String,
    /// Raw label value (as text) that maps to class+.
    pub positive_class: String,
    /// Column names for headerless files.
    #[serde(default)]
    pub columns: Option<Vec<String>>,
    /// Feature columns in order; defaults to every column except the label
    /// and `drop`.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    #[serde(default)]
    pub drop: Vec<String>,
    /// Cell values treated as missing; rows containing them are skipped.
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_missing() -> Vec<String> {
    vec!["?".into(), String::new(), "NA".into()]
}

fn default_delimiter() -> char {
    ','
}

fn default_seed() -> u64 {
    42
}

fn default_train_fraction() -> f64 {
    0.7
}

impl Schema {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::BadSchema(e.to_string()))
    }
}

/// Train/test split with the encoding fitted on the training part.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitData {
    pub train: Dataset,
    pub test: Dataset,
    pub encoding: EncodingSpec,
}

fn labels_match(raw: &str, positive: &str) -> bool {
    if raw == positive {
        return true;
    }
    match (raw.parse::<f64>(), positive.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Raw feature rows, labels and feature column names.
pub type RawTable = (Vec<Vec<f64>>, Vec<Class>, Vec<String>);

/// Reads raw rows and labels according to `schema`, without scaling.
pub fn read_raw_csv(path: &Path, schema: &Schema) -> Result<RawTable> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    if !schema.delimiter.is_ascii() {
        return Err(Error::BadSchema(format!("delimiter {:?} is not ASCII", schema.delimiter)));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.columns.is_none())
        .delimiter(schema.delimiter as u8)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = match &schema.columns {
        Some(cols) => cols.clone(),
        None => reader.headers()?.iter().map(str::to_string).collect(),
    };
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::BadSchema(format!("column {name:?} not found in {header:?}")))
    };
    let label_idx = position(&schema.label_column)?;
    let feature_names: Vec<String> = match &schema.features {
        Some(f) => f.clone(),
        None => header
            .iter()
            .filter(|h| **h != schema.label_column && !schema.drop.contains(h))
            .cloned()
            .collect(),
    };
    if feature_names.is_empty() {
        return Err(Error::BadSchema("no feature columns".into()));
    }
    let feature_idx = feature_names
        .iter()
        .map(|f| position(f))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::BadSchema(format!(
                "row {} has {} fields, expected {}",
                row_no + 1,
                record.len(),
                header.len()
            )));
        }
        let cells: Vec<&str> = feature_idx.iter().map(|&k| &record[k]).collect();
        let label = &record[label_idx];
        if schema.missing.iter().any(|m| m == label || cells.contains(&m.as_str())) {
            continue;
        }
        let mut row = Vec::with_capacity(cells.len());
        for (k, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericFeature {
                column: feature_names[k].clone(),
                row: row_no + 1,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericFeature {
                    column: feature_names[k].clone(),
                    row: row_no + 1,
                    value: cell.to_string(),
                });
            }
            row.push(v);
        }
        rows.push(row);
        labels.push(if labels_match(label, &schema.positive_class) {
            Class::Plus
        } else {
            Class::Minus
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((rows, labels, feature_names))
}

/// Loads a raw CSV, splits it stratified and scales both parts with the
/// training statistics.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<SplitData> {
    let (rows, labels, _) = read_raw_csv(path, schema)?;
    let plus = labels.iter().filter(|&&c| c == Class::Plus).count();
    if plus == 0 || plus == labels.len() {
        return Err(Error::SingleClassData);
    }
    let (train_idx, test_idx) = stratified_indices(&labels, schema.train_fraction, schema.seed)?;
    let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| rows[i].clone()).collect();
    let encoding = EncodingSpec::fit(&train_rows)?;
    let build = |idx: &[usize]| {
        let samples = idx.iter().map(|&i| encoding.encode(&rows[i])).collect();
        let lab = idx.iter().map(|&i| labels[i]).collect();
        Dataset::new(schema.name.clone(), samples, lab)
    };
    Ok(SplitData {
        train: build(&train_idx)?,
        test: build(&test_idx)?,
        encoding,
    })
}

/// Writes an encoded dataset: header `x1,...,xN,label`, the `plus` component
/// per feature and `1`/`0` for class+/class-.
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=data.dim).map(|k| format!("x{k}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (s, c) in data.samples.iter().zip(&data.labels) {
        let mut rec: Vec<String> = s.iter().map(|v| v.plus.to_string()).collect();
        rec.push(if *c == Class::Plus { "1" } else { "0" }.into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the format written by [`write_dataset_csv`].
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = r.headers()?.clone();
    let dim = header.len().saturating_sub(1);
    let expected = (1..=dim).map(|k| format!("x{k}")).chain(["label".to_string()]);
    if dim == 0 || !header.iter().zip(expected).all(|(h, e)| h == e) {
        return Err(Error::InvalidFormat(format!(
            "{}: expected header x1,...,xN,label",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (row_no, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(dim);
        for k in 0..dim {
            let v: f64 = rec[k].parse().map_err(|_| Error::NonNumericFeature {
                column: header[k].to_string(),
                row: row_no + 1,
                value: rec[k].to_string(),
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidFormat(format!("row {}: {} = {v} outside [0, 1]", row_no + 1, &header[k])));
            }
            row.push(v);
        }
        labels.push(match &rec[dim] {
            "1" => Class::Plus,
            "0" => Class::Minus,
            other => return Err(Error::NonBinaryLabels(other.to_string())),
        });
        rows.push(row);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::from_unit_rows(name, &rows, labels)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for GridBounds {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub x1: f64,
    pub x2: f64,
    pub p: f64,
}

fn lattice(lo: f64, hi: f64, resolution: usize, k: usize) -> f64 {
    if resolution == 1 {
        lo
    } else {
        lo + (hi - lo) * k as f64 / (resolution - 1) as f64
    }
}

/// Decision values on a `resolution x resolution` lattice, `x2` varying
/// fastest.
pub fn export_grid<C: Classifier + ?Sized>(model: &C, bounds: GridBounds, resolution: usize) -> Result<Vec<GridPoint>> {
    if model.input_dim() != 2 {
        return Err(Error::DimNot2(model.input_dim()));
    }
    if resolution == 0 {
        return Err(Error::InvalidConfig("grid resolution must be positive".into()));
    }
    let mut out = Vec::with_capacity(resolution * resolution);
    for a in 0..resolution {
        let x1 = lattice(bounds.x_min, bounds.x_max, resolution, a);
        for b in 0..resolution {
            let x2 = lattice(bounds.y_min, bounds.y_max, resolution, b);
            let p = model.decision(&encode_row(&[x1, x2]))?;
            out.push(GridPoint { x1, x2, p });
        }
    }
    Ok(out)
}

pub fn write_grid_csv<W: Write>(points: &[GridPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x1", "x2", "p"])?;
    for g in points {
        w.write_record([g.x1.to_string(), g.x2.to_string(), g.p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Counts lines of a text file, for quick sanity checks on exports.
pub fn count_lines(path: &Path) -> Result<usize> {
    Ok(BufReader::new(File::open(path)?).lines().count())
}

/// Class shares, keyed by class name.
pub fn class_ratios(data: &Dataset) -> BTreeMap<&'static str, f64> {
    let (p, m) = data.class_counts();
    let n = data.len() as f64;
    BTreeMap::from([(Class::Plus.name(), p as f64 / n), (Class::Minus.name(), m as f64 / n)])
}
