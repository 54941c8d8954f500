//! Soft (differentiable) decision trees.
//!
//! A tree of `depth` d has 2^(d−1) − 1 internal nodes and 2^(d−1) leaves laid
//! out as an implicit heap: node `j` has children `2j+1` (left) and `2j+2`
//! (right), with leaves occupying indices `ni..=2ni`. Each internal node holds
//! an oblique split (w, b); its gate value σ((wᵀx + b)/T) is the probability of
//! routing *right*. Each leaf holds class logits; the model output is the
//! mixture Σ_leaf P(leaf | x) · softmax(leaf_logits).
//!
//! `backward` computes exact reverse-mode gradients of any scalar loss given
//! ∂L/∂output, using a bottom-up sweep of leaf-subtree values so that no
//! division by path probabilities is needed (stable at low temperature).

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Exponential temperature decay T(s) = T0 · (Tmin/T0)^(s/S) for stage s ≤ S.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AnnealSchedule {
    pub t0: f64,
    pub tmin: f64,
    pub stages: usize,
}

impl AnnealSchedule {
    pub fn new(t0: f64, tmin: f64, stages: usize) -> Self {
        Self { t0, tmin, stages }
    }

    /// Constant schedule (no annealing).
    pub fn fixed(t: f64) -> Self {
        Self { t0: t, tmin: t, stages: 1 }
    }

    /// Temperature at `stage`; clamps to `tmin` for stage ≥ stages.
    pub fn temperature(&self, stage: usize) -> f64 {
        if stage >= self.stages || self.stages == 0 {
            return self.tmin;
        }
        self.t0 * (self.tmin / self.t0).powf(stage as f64 / self.stages as f64)
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max subtraction, written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SoftTreeJson {
    depth: usize,
    n_features: usize,
    n_classes: usize,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    leaf_logits: Vec<Vec<f64>>,
    temperature: f64,
}

/// Differentiable soft decision tree.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(try_from = "SoftTreeJson", into = "SoftTreeJson")]
pub struct SoftTree {
    depth: usize,
    n_features: usize,
    n_classes: usize,
    /// Internal-node weights, row-major `[n_internal × n_features]`.
    pub weights: Vec<f64>,
    /// Internal-node biases, `[n_internal]`.
    pub biases: Vec<f64>,
    /// Leaf logits, row-major `[n_leaves × n_classes]`.
    pub leaf_logits: Vec<f64>,
    /// Current gate temperature (> 0).
    pub temperature: f64,
}

impl TryFrom<SoftTreeJson> for SoftTree {
    type Error = Error;

    fn try_from(j: SoftTreeJson) -> Result<Self> {
        if j.depth == 0 {
            return Err(Error::InvalidArgument("depth must be ≥ 1".into()));
        }
        if j.temperature <= 0.0 || !j.temperature.is_finite() {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        let ni = (1usize << (j.depth - 1)) - 1;
        let nl = 1usize << (j.depth - 1);
        if j.weights.len() != ni || j.biases.len() != ni || j.leaf_logits.len() != nl {
            return Err(Error::Dimension(format!(
                "depth {} implies {} internal nodes and {} leaves; got {} weight rows, {} biases, {} leaf rows",
                j.depth,
                ni,
                nl,
                j.weights.len(),
                j.biases.len(),
                j.leaf_logits.len()
            )));
        }
        if j.weights.iter().any(|w| w.len() != j.n_features) {
            return Err(Error::Dimension("weight row length != n_features".into()));
        }
        if j.leaf_logits.iter().any(|l| l.len() != j.n_classes) {
            return Err(Error::Dimension("leaf logit row length != n_classes".into()));
        }
        Ok(Self {
            depth: j.depth,
            n_features: j.n_features,
            n_classes: j.n_classes,
            weights: j.weights.into_iter().flatten().collect(),
            biases: j.biases,
            leaf_logits: j.leaf_logits.into_iter().flatten().collect(),
            temperature: j.temperature,
        })
    }
}

impl From<SoftTree> for SoftTreeJson {
    fn from(t: SoftTree) -> Self {
        let f = t.n_features;
        let c = t.n_classes;
        Self {
            depth: t.depth,
            n_features: f,
            n_classes: c,
            weights: t.weights.chunks(f).map(<[f64]>::to_vec).collect(),
            biases: t.biases.clone(),
            leaf_logits: t.leaf_logits.chunks(c).map(<[f64]>::to_vec).collect(),
            temperature: t.temperature,
        }
    }
}

/// Gradient accumulator matching [`SoftTree`]'s parameter layout.
#[derive(Debug, Clone)]
pub struct TreeGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub leaf_logits: Vec<f64>,
}

impl TreeGrads {
    pub fn zeros(tree: &SoftTree) -> Self {
        Self {
            weights: vec![0.0; tree.weights.len()],
            biases: vec![0.0; tree.biases.len()],
            leaf_logits: vec![0.0; tree.leaf_logits.len()],
        }
    }

    pub fn reset(&mut self) {
        self.weights.iter_mut().for_each(|g| *g = 0.0);
        self.biases.iter_mut().for_each(|g| *g = 0.0);
        self.leaf_logits.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Per-sample forward state reused by [`SoftTree::backward`].
#[derive(Debug, Clone)]
pub struct TreeCache {
    /// Gate values σ(z_j/T) per internal node.
    gates: Vec<f64>,
    /// Probability of reaching each heap node (root = 1).
    node_probs: Vec<f64>,
    /// Per-leaf softmax, row-major `[n_leaves × n_classes]`.
    leaf_soft: Vec<f64>,
    /// Model output (class probabilities).
    pub output: Vec<f64>,
    /// Scratch for the backward subtree-value sweep.
    svals: Vec<f64>,
}

impl TreeCache {
    pub fn new(tree: &SoftTree) -> Self {
        let ni = tree.n_internal();
        let nl = tree.n_leaves();
        Self {
            gates: vec![0.0; ni],
            node_probs: vec![0.0; ni + nl],
            leaf_soft: vec![0.0; nl * tree.n_classes],
            output: vec![0.0; tree.n_classes],
            svals: vec![0.0; ni + nl],
        }
    }

    /// Probability of reaching leaf `l` (0-based among leaves).
    pub fn leaf_prob(&self, tree: &SoftTree, l: usize) -> f64 {
        self.node_probs[tree.n_internal() + l]
    }
}

impl SoftTree {
    /// Fresh tree with gate parameters ~ U(−0.5, 0.5)/√n_features and zero
    /// leaf logits, at temperature 1.
    pub fn new<R: Rng>(depth: usize, n_features: usize, n_classes: usize, rng: &mut R) -> Self {
        assert!(depth >= 1, "depth must be ≥ 1");
        assert!(n_features >= 1 && n_classes >= 1);
        let ni = (1usize << (depth - 1)) - 1;
        let nl = 1usize << (depth - 1);
        let lim = 0.5 / (n_features as f64).sqrt();
        let mut draw = || rng.gen_range(-lim..lim);
        Self {
            depth,
            n_features,
            n_classes,
            weights: (0..ni * n_features).map(|_| draw()).collect(),
            biases: (0..ni).map(|_| draw()).collect(),
            leaf_logits: vec![0.0; nl * n_classes],
            temperature: 1.0,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_internal(&self) -> usize {
        (1usize << (self.depth - 1)) - 1
    }

    pub fn n_leaves(&self) -> usize {
        1usize << (self.depth - 1)
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.biases.len() + self.leaf_logits.len()
    }

    /// Weight row of internal node `j`.
    pub fn weight_row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.n_features..(j + 1) * self.n_features]
    }

    /// Logit row of leaf `l`.
    pub fn leaf_row(&self, l: usize) -> &[f64] {
        &self.leaf_logits[l * self.n_classes..(l + 1) * self.n_classes]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Dimension(format!(
                "input has {} features, tree expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Forward pass; fills `cache` (gates, reach probabilities, output).
    pub fn forward(&self, x: &[f64], cache: &mut TreeCache) -> Result<()> {
        self.check_input(x)?;
        let ni = self.n_internal();
        let nl = self.n_leaves();
        let c = self.n_classes;
        cache.node_probs[0] = 1.0;
        for j in 0..ni {
            let w = self.weight_row(j);
            let z = dot(w, x) + self.biases[j];
            let g = sigmoid(z / self.temperature);
            cache.gates[j] = g;
            let p = cache.node_probs[j];
            cache.node_probs[2 * j + 1] = p * (1.0 - g);
            cache.node_probs[2 * j + 2] = p * g;
        }
        cache.output.iter_mut().for_each(|o| *o = 0.0);
        for l in 0..nl {
            let soft = &mut cache.leaf_soft[l * c..(l + 1) * c];
            softmax_into(self.leaf_row(l), soft);
            let p = cache.node_probs[ni + l];
            for (o, s) in cache.output.iter_mut().zip(soft.iter()) {
                *o += p * *s;
            }
        }
        Ok(())
    }

    /// Convenience forward returning a fresh output vector.
    pub fn output_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cache = TreeCache::new(self);
        self.forward(x, &mut cache)?;
        Ok(cache.output)
    }

    /// Argmax class of the soft output.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.output_probs(x)?))
    }

    /// Log of the floored output probability for `class`.
    pub fn log_prob(cache: &TreeCache, class: usize) -> f64 {
        cache.output[class].max(PROB_FLOOR).ln()
    }

    /// Accumulates ∂L/∂params into `grads` given ∂L/∂output for the sample
    /// last passed through `forward` with this `cache`.
    pub fn backward(&self, x: &[f64], cache: &mut TreeCache, dout: &[f64], grads: &mut TreeGrads) {
        debug_assert_eq!(x.len(), self.n_features);
        debug_assert_eq!(dout.len(), self.n_classes);
        let ni = self.n_internal();
        let nl = self.n_leaves();
        let c = self.n_classes;
        let t = self.temperature;
        let svals = &mut cache.svals;
        for l in 0..nl {
            let soft = &cache.leaf_soft[l * c..(l + 1) * c];
            // dL/d(leaf reach prob) and leaf-logit gradients via the softmax jacobian
            let p = cache.node_probs[ni + l];
            let mut val = 0.0;
            let mut inner = 0.0;
            for k in 0..c {
                let ds = dout[k] * p;
                val += dout[k] * soft[k];
                inner += ds * soft[k];
            }
            svals[ni + l] = val;
            let gl = &mut grads.leaf_logits[l * c..(l + 1) * c];
            for k in 0..c {
                gl[k] += soft[k] * (dout[k] * p - inner);
            }
        }
        for j in (0..ni).rev() {
            let g = cache.gates[j];
            let sl = svals[2 * j + 1];
            let sr = svals[2 * j + 2];
            svals[j] = (1.0 - g) * sl + g * sr;
            let dg = cache.node_probs[j] * (sr - sl);
            let dz = dg * g * (1.0 - g) / t;
            let gw = &mut grads.weights[j * self.n_features..(j + 1) * self.n_features];
            for (gwi, xi) in gw.iter_mut().zip(x) {
                *gwi += dz * *xi;
            }
            grads.biases[j] += dz;
        }
    }

    /// Unnormalized L1 penalty Σ|w| over internal-node weights (biases and
    /// leaf logits excluded).
    pub fn l1_penalty(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    /// Adds `scale · sign(w)` to the weight gradients (subgradient 0 at 0).
    pub fn l1_subgradient(&self, scale: f64, grads: &mut TreeGrads) {
        for (g, w) in grads.weights.iter_mut().zip(&self.weights) {
            *g += scale * w.signum() * if *w == 0.0 { 0.0 } else { 1.0 };
        }
    }

    /// Soft-threshold step w ← sign(w)·max(|w| − shrink, 0) on internal-node
    /// weights: the proximal operator of `shrink · Σ|w|`.
    pub fn l1_proximal(&mut self, shrink: f64) {
        for w in self.weights.iter_mut() {
            *w = w.signum() * (w.abs() - shrink).max(0.0);
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the maximum value; ties break toward the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}
