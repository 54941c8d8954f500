//! Minimal dense feed-forward networks (ELU hidden activations, identity
//! output) with analytic backpropagation, and a bias-corrected Adam optimizer.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// ELU(z) = z for z > 0, exp(z) − 1 otherwise.
fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

/// ELU derivative recovered from the post-activation value y = ELU(z):
/// 1 for y > 0, y + 1 (= exp(z)) otherwise.
fn elu_deriv_from_output(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else {
        y + 1.0
    }
}

/// Dense network: affine layers with ELU on hidden layers, identity output.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    /// Per layer, row-major `[out × in]`.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Per-sample activations retained for backpropagation. `acts[0]` is the
/// input; `acts[i]` the post-activation output of layer i.
#[derive(Debug, Clone)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn new(net: &Mlp) -> Self {
        Self { acts: net.layer_sizes.iter().map(|&n| vec![0.0; n]).collect() }
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty network")
    }
}

/// Gradient accumulator matching [`Mlp`]'s layout.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros(net: &Mlp) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for w in self.weights.iter_mut() {
            w.iter_mut().for_each(|g| *g = 0.0);
        }
        for b in self.biases.iter_mut() {
            b.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

impl Mlp {
    /// He-style scaled uniform init U(±√(6/fan_in)); biases zero.
    pub fn new<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output layers");
        assert!(layer_sizes.iter().all(|&n| n >= 1));
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let lim = (6.0 / fan_in as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.gen_range(-lim..lim)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Self { layer_sizes: layer_sizes.to_vec(), weights, biases }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Forward pass; fills `cache` with every layer's post-activation values.
    pub fn forward(&self, x: &[f64], cache: &mut MlpCache) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::Dimension(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.n_inputs()
            )));
        }
        cache.acts[0].copy_from_slice(x);
        for layer in 0..self.n_layers() {
            let (inp, out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
            let last = layer + 1 == self.n_layers();
            let w = &self.weights[layer];
            let (before, after) = cache.acts.split_at_mut(layer + 1);
            let src = &before[layer];
            let dst = &mut after[0];
            for o in 0..out {
                let row = &w[o * inp..(o + 1) * inp];
                let z = crate::difftree::dot(row, src) + self.biases[layer][o];
                dst[o] = if last { z } else { elu(z) };
            }
        }
        Ok(())
    }

    /// Convenience forward returning a fresh output vector.
    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cache = MlpCache::new(self);
        self.forward(x, &mut cache)?;
        Ok(cache.output().to_vec())
    }

    /// Accumulates ∂L/∂params into `grads` given ∂L/∂output for the sample
    /// held in `cache`. Returns ∂L/∂input.
    pub fn backward(&self, cache: &MlpCache, dout: &[f64], grads: &mut MlpGrads) -> Vec<f64> {
        debug_assert_eq!(dout.len(), self.n_outputs());
        let mut delta = dout.to_vec();
        for layer in (0..self.n_layers()).rev() {
            let (inp, out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
            let last = layer + 1 == self.n_layers();
            if !last {
                for (d, y) in delta.iter_mut().zip(&cache.acts[layer + 1]) {
                    *d *= elu_deriv_from_output(*y);
                }
            }
            let src = &cache.acts[layer];
            let gw = &mut grads.weights[layer];
            for o in 0..out {
                let d = delta[o];
                grads.biases[layer][o] += d;
                let row = &mut gw[o * inp..(o + 1) * inp];
                for (g, s) in row.iter_mut().zip(src) {
                    *g += d * *s;
                }
            }
            let w = &self.weights[layer];
            let mut prev = vec![0.0; inp];
            for o in 0..out {
                let d = delta[o];
                let row = &w[o * inp..(o + 1) * inp];
                for (p, wv) in prev.iter_mut().zip(row) {
                    *p += d * *wv;
                }
            }
            delta = prev;
        }
        delta
    }

    /// Mutable views of parameter storage, for the optimizer.
    pub fn param_segments_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .map(|w| w.as_mut_slice())
            .chain(self.biases.iter_mut().map(|b| b.as_mut_slice()))
            .collect()
    }
}

impl MlpGrads {
    pub fn segments(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .map(|w| w.as_slice())
            .chain(self.biases.iter().map(|b| b.as_slice()))
            .collect()
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    /// One update over parameters supplied as consecutive segments. Total
    /// segment length must match the state size. Non-finite gradients abort.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        let total: usize = grads.iter().map(|g| g.len()).sum();
        if total != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer holds {} parameters, got {}",
                self.m.len(),
                total
            )));
        }
        if grads.iter().any(|seg| seg.iter().any(|g| !g.is_finite())) {
            return Err(Error::Numeric("non-finite gradient in optimizer step".into()));
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        let mut off = 0;
        for (pseg, gseg) in params.iter_mut().zip(grads) {
            for (p, &g) in pseg.iter_mut().zip(gseg.iter()) {
                let m = &mut self.m[off];
                let v = &mut self.v[off];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mh = *m / b1t;
                let vh = *v / b2t;
                *p -= self.lr * mh / (vh.sqrt() + self.eps);
                off += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let mut rng = stream_rng(0, 0);
        let mut net = Mlp::new(&[3, 4, 2], &mut rng);
        for w in net.weights.iter_mut() {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        let out = net.output(&[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer_is_affine() {
        let mut rng = stream_rng(1, 0);
        let mut net = Mlp::new(&[2, 1], &mut rng);
        net.weights[0] = vec![2.0, -3.0];
        net.biases[0] = vec![0.25];
        let out = net.output(&[1.5, 0.5]).unwrap();
        assert!((out[0] - (2.0 * 1.5 - 3.0 * 0.5 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences_on_used_architectures() {
        let h = 1e-5;
        for sizes in [vec![4, 64, 64, 5], vec![4, 32, 32, 32, 1], vec![3, 8, 2]] {
            for seed in 0..3 {
                let mut rng = stream_rng(40 + seed, 2);
                let net = Mlp::new(&sizes, &mut rng);
                let x: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let c: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let loss = |n: &Mlp| crate::difftree::dot(&n.output(&x).unwrap(), &c);
                let mut cache = MlpCache::new(&net);
                net.forward(&x, &mut cache).unwrap();
                let mut grads = MlpGrads::zeros(&net);
                net.backward(&cache, &c, &mut grads);
                for layer in 0..net.n_layers() {
                    for i in 0..net.weights[layer].len() {
                        let mut np = net.clone();
                        np.weights[layer][i] += h;
                        let lp = loss(&np);
                        np.weights[layer][i] -= 2.0 * h;
                        let lm = loss(&np);
                        let fd = (lp - lm) / (2.0 * h);
                        let a = grads.weights[layer][i];
                        assert!(
                            (a - fd).abs() <= 1e-10 + 1e-4 * a.abs().max(fd.abs()),
                            "layer {layer} w[{i}] analytic {a:e} fd {fd:e}"
                        );
                    }
                    for i in 0..net.biases[layer].len() {
                        let mut np = net.clone();
                        np.biases[layer][i] += h;
                        let lp = loss(&np);
                        np.biases[layer][i] -= 2.0 * h;
                        let lm = loss(&np);
                        let fd = (lp - lm) / (2.0 * h);
                        let a = grads.biases[layer][i];
                        assert!(
                            (a - fd).abs() <= 1e-10 + 1e-4 * a.abs().max(fd.abs()),
                            "layer {layer} b[{i}]"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = stream_rng(77, 0);
        let net = Mlp::new(&[3, 6, 2], &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = [0.7, -0.3];
        let mut cache = MlpCache::new(&net);
        net.forward(&x, &mut cache).unwrap();
        let mut grads = MlpGrads::zeros(&net);
        let dx = net.backward(&cache, &c, &mut grads);
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x.clone();
            xp[i] += h;
            let lp = crate::difftree::dot(&net.output(&xp).unwrap(), &c);
            xp[i] -= 2.0 * h;
            let lm = crate::difftree::dot(&net.output(&xp).unwrap(), &c);
            let fd = (lp - lm) / (2.0 * h);
            assert!((dx[i] - fd).abs() < 1e-6, "dx[{i}]");
        }
    }

    #[test]
    fn actor_layout_parameter_count() {
        let mut rng = stream_rng(2, 0);
        let actor = Mlp::new(&[4, 64, 64, 5], &mut rng);
        assert_eq!(actor.n_params(), 4 * 64 + 64 + 64 * 64 + 64 + 64 * 5 + 5);
        assert_eq!(actor.n_params(), 4805);
        let critic = Mlp::new(&[4, 32, 32, 32, 1], &mut rng);
        assert_eq!(critic.n_params(), 4 * 32 + 32 + 32 * 32 + 32 + 32 * 32 + 32 + 32 + 1);
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut p = vec![1.0, -2.0, 3.0];
        let g = vec![0.0, 0.0, 0.0];
        let mut adam = Adam::new(3, 0.1);
        adam.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let mut p = vec![0.0, 0.0];
        let g = vec![0.37, -1.25e4];
        let mut adam = Adam::new(2, 0.01);
        adam.step(&mut [&mut p], &[&g]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-6);
        assert!((p[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut p = vec![0.0];
        let g = vec![f64::NAN];
        let mut adam = Adam::new(1, 0.01);
        assert!(adam.step(&mut [&mut p], &[&g]).is_err());
    }

    #[test]
    fn adam_matches_reference_trajectory() {
        // hand-checked two-step update on a quadratic f(p) = p²/2, grad = p
        let mut p = vec![1.0];
        let mut adam = Adam::new(1, 0.1);
        let g1 = vec![1.0];
        adam.step(&mut [&mut p], &[&g1]).unwrap();
        // step 1: mh=1, vh=1 → p = 1 − 0.1·1/(1+1e−8)
        assert!((p[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-12);
        let g2 = vec![p[0]];
        let m = 0.9 * (0.1 * 1.0) + 0.1 * g2[0];
        let v = 0.999 * (0.001 * 1.0) + 0.001 * g2[0] * g2[0];
        let mh = m / (1.0 - 0.9f64.powi(2));
        let vh = v / (1.0 - 0.999f64.powi(2));
        let want = p[0] - 0.1 * mh / (vh.sqrt() + 1e-8);
        adam.step(&mut [&mut p], &[&g2]).unwrap();
        assert!((p[0] - want).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let mut rng = stream_rng(5, 0);
        let net = Mlp::new(&[4, 8, 3], &mut rng);
        let s = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&s).unwrap();
        assert_eq!(net, back);
    }
}
