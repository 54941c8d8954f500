//! Synthetic four-class dataset and the supervised soft-tree classifier:
//! correlated 2-D features labeled by quartiles of a bivariate normal CDF
//! value, cross-entropy training with temperature annealing and optional L1.

use crate::difftree::{argmax, AnnealSchedule, SoftTree, TreeCache, TreeGrads, PROB_FLOOR};
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::oblique::ObliqueNode;
use crate::rng::stream_rng;
use crate::special::normal_cdf;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, Write as _};
use std::path::Path;

pub const N_FEATURES: usize = 2;
pub const N_CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split tag {other:?}"))),
        }
    }
}

/// Labeled 2-feature samples with train/validation/test tags (60/20/20).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDataset {
    pub features: Vec<[f64; N_FEATURES]>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
}

/// The feature map applied to a latent standard-normal pair: x₁ = 2z₁ − z₂,
/// x₂ = 2z₁ + z₂ (variance 5, correlation 0.6).
pub fn features_from_latent(z1: f64, z2: f64) -> [f64; N_FEATURES] {
    [2.0 * z1 - z2, 2.0 * z1 + z2]
}

const DATA_STREAM: u64 = 0;

/// Draws `n` latent normal pairs, maps them to features, and labels each by
/// the empirical quartile of Φ(z₁)·Φ(z₂) within the batch (balanced classes).
/// The first 60% of rows are tagged train, the next 20% validation, the
/// remaining 20% test.
pub fn generate_dataset(n: usize, seed: u64) -> Result<ClassDataset> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 samples, got {n}")));
    }
    let mut rng = stream_rng(seed, DATA_STREAM);
    let mut features = Vec::with_capacity(n);
    let mut cdf_vals = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        features.push(features_from_latent(z1, z2));
        cdf_vals.push(normal_cdf(z1) * normal_cdf(z2));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| cdf_vals[*a].partial_cmp(&cdf_vals[*b]).unwrap());
    let mut labels = vec![0usize; n];
    for (rank, idx) in order.iter().enumerate() {
        labels[*idx] = (rank * N_CLASSES / n).min(N_CLASSES - 1);
    }
    let train_end = n * 6 / 10;
    let val_end = n * 8 / 10;
    let splits = (0..n)
        .map(|i| {
            if i < train_end {
                Split::Train
            } else if i < val_end {
                Split::Validation
            } else {
                Split::Test
            }
        })
        .collect();
    Ok(ClassDataset { features, labels, splits })
}

impl ClassDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|i| self.splits[*i] == split).collect()
    }

    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x1", "x2", "label", "split"])?;
        for i in 0..self.len() {
            wtr.write_record(&[
                self.features[i][0].to_string(),
                self.features[i][1].to_string(),
                self.labels[i].to_string(),
                self.splits[i].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn from_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x1", "x2", "label", "split"] {
            return Err(Error::InvalidArgument(format!("unexpected CSV header: {headers:?}")));
        }
        let mut out = ClassDataset { features: Vec::new(), labels: Vec::new(), splits: Vec::new() };
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<&str> {
                rec.get(i).ok_or_else(|| Error::InvalidArgument("short CSV record".into()))
            };
            let x1: f64 = field(0)?.parse().map_err(|e| Error::InvalidArgument(format!("x1: {e}")))?;
            let x2: f64 = field(1)?.parse().map_err(|e| Error::InvalidArgument(format!("x2: {e}")))?;
            let label: usize =
                field(2)?.parse().map_err(|e| Error::InvalidArgument(format!("label: {e}")))?;
            if label >= N_CLASSES {
                return Err(Error::InvalidArgument(format!("label {label} out of range")));
            }
            out.features.push([x1, x2]);
            out.labels.push(label);
            out.splits.push(field(3)?.parse()?);
        }
        Ok(out)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.to_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::from_csv(BufReader::new(std::fs::File::open(path)?))
    }
}

/// Per-feature standardization statistics taken from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: [f64; N_FEATURES],
    pub std: [f64; N_FEATURES],
}

impl Scaler {
    pub fn fit(data: &ClassDataset) -> Result<Self> {
        let idx = data.indices(Split::Train);
        if idx.is_empty() {
            return Err(Error::InvalidArgument("empty training split".into()));
        }
        let n = idx.len() as f64;
        let mut mean = [0.0; N_FEATURES];
        let mut var = [0.0; N_FEATURES];
        for &i in &idx {
            for f in 0..N_FEATURES {
                mean[f] += data.features[i][f] / n;
            }
        }
        for &i in &idx {
            for f in 0..N_FEATURES {
                var[f] += (data.features[i][f] - mean[f]).powi(2) / n;
            }
        }
        let std = var.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
        Ok(Self { mean, std })
    }

    pub fn transform(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for f in 0..N_FEATURES {
            out[f] = (x[f] - self.mean[f]) / self.std[f];
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub depth: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// full passes over the training split; also the anneal stage count
    pub iterations: usize,
    pub l1_lambda: f64,
    pub t0: f64,
    pub tmin: f64,
    /// anneal stages; defaults to `iterations` when 0
    pub anneal_stages: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            depth: 7,
            learning_rate: 0.002,
            batch_size: 32,
            iterations: 100,
            l1_lambda: 0.0,
            t0: 1.0,
            tmin: 0.01,
            anneal_stages: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.batch_size == 0 || self.iterations == 0 {
            return Err(Error::InvalidArgument("depth, batch size, iterations must be ≥ 1".into()));
        }
        if self.learning_rate <= 0.0 || self.t0 <= 0.0 || self.tmin <= 0.0 || self.l1_lambda < 0.0 {
            return Err(Error::InvalidArgument("rates and temperatures must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// mean cross-entropy plus the L1 term, over the epoch's minibatches
    pub loss: f64,
    pub temperature: f64,
    /// validation accuracy (training accuracy when no validation rows exist)
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ClassifierRun {
    pub tree: SoftTree,
    pub scaler: Scaler,
    pub metrics: Vec<IterationMetrics>,
}

const TRAIN_STREAM: u64 = 1;

/// Trains a soft-tree classifier by Adam on cross-entropy + λ·Σ|w| (the L1
/// subgradient is added to the weight gradients). Features are standardized
/// with training-split statistics. The temperature advances one anneal stage
/// per iteration, reaching `tmin` after the final one.
pub fn train_classifier(data: &ClassDataset, config: &TrainConfig) -> Result<ClassifierRun> {
    config.validate()?;
    let scaler = Scaler::fit(data)?;
    let train_idx = data.indices(Split::Train);
    let val_idx = {
        let v = data.indices(Split::Validation);
        if v.is_empty() {
            train_idx.clone()
        } else {
            v
        }
    };
    let scaled: Vec<[f64; N_FEATURES]> = data.features.iter().map(|x| scaler.transform(x)).collect();

    let mut rng = stream_rng(config.seed, TRAIN_STREAM);
    let mut tree = SoftTree::new(config.depth, N_FEATURES, N_CLASSES, &mut rng);
    let stages = if config.anneal_stages == 0 { config.iterations } else { config.anneal_stages };
    let anneal = AnnealSchedule::new(config.t0, config.tmin, stages);
    let mut adam = Adam::new(tree.n_params(), config.learning_rate);
    let mut grads = TreeGrads::zeros(&tree);
    let mut cache = TreeCache::new(&tree);
    let mut dout = vec![0.0; N_CLASSES];
    let mut order = train_idx.clone();
    let mut metrics = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        tree.temperature = anneal.temperature(iteration);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(config.batch_size) {
            grads.reset();
            let m = chunk.len() as f64;
            let mut loss = 0.0;
            for &i in chunk {
                tree.forward(&scaled[i], &mut cache)?;
                let p = cache.output[data.labels[i]].max(PROB_FLOOR);
                loss -= p.ln() / m;
                dout.iter_mut().for_each(|d| *d = 0.0);
                dout[data.labels[i]] = -1.0 / (p * m);
                tree.backward(&scaled[i], &mut cache, &dout, &mut grads);
            }
            if config.l1_lambda > 0.0 {
                loss += config.l1_lambda * tree.l1_penalty();
                tree.l1_subgradient(config.l1_lambda, &mut grads);
            }
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at iteration {iteration}"
                )));
            }
            epoch_loss += loss;
            batches += 1.0;
            adam.step(
                &mut [&mut tree.weights, &mut tree.biases, &mut tree.leaf_logits],
                &[&grads.weights, &grads.biases, &grads.leaf_logits],
            )?;
        }
        let accuracy = accuracy_of(&tree, data, &scaled, &val_idx)?;
        metrics.push(IterationMetrics {
            iteration,
            loss: epoch_loss / batches,
            temperature: tree.temperature,
            accuracy,
        });
    }
    tree.temperature = anneal.temperature(config.iterations);
    Ok(ClassifierRun { tree, scaler, metrics })
}

fn accuracy_of(
    tree: &SoftTree,
    data: &ClassDataset,
    scaled: &[[f64; N_FEATURES]],
    idx: &[usize],
) -> Result<f64> {
    let mut cache = TreeCache::new(tree);
    let mut hits = 0usize;
    for &i in idx {
        tree.forward(&scaled[i], &mut cache)?;
        if argmax(&cache.output) == data.labels[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / idx.len() as f64)
}

/// Classifiers that map a (scaled) feature vector to a class index.
pub trait ClassPredictor {
    fn predict_class(&self, x: &[f64]) -> Result<usize>;
}

impl ClassPredictor for SoftTree {
    fn predict_class(&self, x: &[f64]) -> Result<usize> {
        self.predict(x)
    }
}

impl ClassPredictor for ObliqueNode {
    fn predict_class(&self, x: &[f64]) -> Result<usize> {
        self.predict(x)
    }
}

/// Fraction of a split classified correctly. Features pass through `scaler`
/// when one is given (models trained on standardized inputs need the same
/// statistics at evaluation time).
pub fn evaluate_accuracy<M: ClassPredictor>(
    model: &M,
    data: &ClassDataset,
    split: Split,
    scaler: Option<&Scaler>,
) -> Result<f64> {
    let idx = data.indices(split);
    if idx.is_empty() {
        return Err(Error::InvalidArgument(format!("empty {split} split")));
    }
    let mut hits = 0usize;
    for &i in &idx {
        let x = match scaler {
            Some(s) => s.transform(&data.features[i]),
            None => data.features[i],
        };
        if model.predict_class(&x)? == data.labels[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / idx.len() as f64)
}

pub fn save_metrics(metrics: &[IterationMetrics], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, metrics)?;
    f.flush()?;
    Ok(())
}
