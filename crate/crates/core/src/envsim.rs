//! Bridge-element deterioration environment: four-condition-state Markov
//! dynamics under five life-cycle actions, failure risk from reliability
//! indices, Dirichlet random restarts, and discounted life-cycle-cost
//! rollouts.

use crate::difftree::argmax;
use crate::error::{Error, Result};
use crate::special::{digamma, inv_digamma, normal_cdf, normal_quantile};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const N_CS: usize = 4;
pub const N_ACTIONS: usize = 5;

/// Condition-state proportion vector (CS1..CS4); components in [0,1] summing
/// to 1 within 1e−9.
pub type CsVector = [f64; N_CS];

pub const ACTION_NAMES: [&str; N_ACTIONS] =
    ["do nothing", "maintenance", "repair", "rehabilitation", "replacement"];

/// Validates the simplex invariants.
pub fn validate_cs(s: &CsVector) -> Result<()> {
    if s.iter().any(|v| !(0.0..=1.0 + 1e-9).contains(v)) {
        return Err(Error::InvalidArgument(format!("CS proportions out of [0,1]: {s:?}")));
    }
    let sum: f64 = s.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("CS proportions sum to {sum}, expected 1")));
    }
    Ok(())
}

/// A stationary decision rule over condition-state vectors.
pub trait Policy: Sync {
    /// Deterministic (greedy) action.
    fn act(&self, s: &[f64]) -> usize;

    /// Action distribution; defaults to a point mass on [`Policy::act`].
    fn probs(&self, s: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; N_ACTIONS];
        p[self.act(s)] = 1.0;
        p
    }
}

impl Policy for crate::difftree::SoftTree {
    fn act(&self, s: &[f64]) -> usize {
        argmax(&self.output_probs(s).expect("state dimension"))
    }

    fn probs(&self, s: &[f64]) -> Vec<f64> {
        self.output_probs(s).expect("state dimension")
    }
}

impl Policy for crate::oblique::ObliqueNode {
    fn act(&self, s: &[f64]) -> usize {
        self.predict(s).expect("state dimension")
    }
}

impl Policy for crate::nn::Mlp {
    fn act(&self, s: &[f64]) -> usize {
        argmax(&self.output(s).expect("state dimension"))
    }

    fn probs(&self, s: &[f64]) -> Vec<f64> {
        let logits = self.output(s).expect("state dimension");
        let mut p = vec![0.0; logits.len()];
        crate::difftree::softmax_into(&logits, &mut p);
        p
    }
}

impl<F: Fn(&[f64]) -> usize + Sync> Policy for F {
    fn act(&self, s: &[f64]) -> usize {
        self(s)
    }
}

/// One environment step: the charged cost and the successor state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: CsVector,
    /// action cost + annual risk of the pre-transition state
    pub cost: f64,
    pub action_cost: f64,
    pub risk: f64,
}

/// One trajectory record row.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub state: CsVector,
    pub action: usize,
    pub cost: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvConfigJson {
    transitions: Vec<Vec<Vec<f64>>>,
    action_costs: Vec<f64>,
    beta: Vec<f64>,
    failure_cost: f64,
    discount: f64,
    dirichlet_theta: Vec<f64>,
    horizon: usize,
    train_episode_len: usize,
}

/// Environment parameters: transition matrices (as published, kept for
/// auditability, plus the validated row-stochastic repair), costs, reliability
/// indices, discounting, restart distribution, and horizons.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "EnvConfigJson", into = "EnvConfigJson")]
pub struct EnvConfig {
    /// Matrices exactly as configured (may contain non-stochastic rows).
    raw_transitions: [[[f64; N_CS]; N_CS]; N_ACTIONS],
    /// Row-renormalized matrices actually used by the dynamics.
    transitions: [[[f64; N_CS]; N_CS]; N_ACTIONS],
    pub action_costs: [f64; N_ACTIONS],
    pub beta: [f64; N_CS],
    pub failure_cost: f64,
    pub discount: f64,
    pub dirichlet_theta: [f64; N_CS],
    pub horizon: usize,
    pub train_episode_len: usize,
    /// Human-readable notes about rows repaired during validation.
    warnings: Vec<String>,
}

impl TryFrom<EnvConfigJson> for EnvConfig {
    type Error = Error;

    fn try_from(j: EnvConfigJson) -> Result<Self> {
        let to4 = |v: &[f64], what: &str| -> Result<[f64; 4]> {
            v.try_into().map_err(|_| Error::Dimension(format!("{what} must have 4 entries")))
        };
        if j.transitions.len() != N_ACTIONS {
            return Err(Error::Dimension("expected 5 transition matrices".into()));
        }
        let mut raw = [[[0.0; N_CS]; N_CS]; N_ACTIONS];
        for (a, m) in j.transitions.iter().enumerate() {
            if m.len() != N_CS {
                return Err(Error::Dimension("transition matrix must be 4×4".into()));
            }
            for (i, row) in m.iter().enumerate() {
                raw[a][i] = to4(row, "transition row")?;
            }
        }
        let action_costs = j
            .action_costs
            .as_slice()
            .try_into()
            .map_err(|_| Error::Dimension("action_costs must have 5 entries".into()))?;
        EnvConfig::from_parts(
            raw,
            action_costs,
            to4(&j.beta, "beta")?,
            j.failure_cost,
            j.discount,
            to4(&j.dirichlet_theta, "dirichlet_theta")?,
            j.horizon,
            j.train_episode_len,
        )
    }
}

impl From<EnvConfig> for EnvConfigJson {
    fn from(c: EnvConfig) -> Self {
        Self {
            transitions: c
                .raw_transitions
                .iter()
                .map(|m| m.iter().map(|r| r.to_vec()).collect())
                .collect(),
            action_costs: c.action_costs.to_vec(),
            beta: c.beta.to_vec(),
            failure_cost: c.failure_cost,
            discount: c.discount,
            dirichlet_theta: c.dirichlet_theta.to_vec(),
            horizon: c.horizon,
            train_episode_len: c.train_episode_len,
        }
    }
}

impl Default for EnvConfig {
    /// Steel-girder element model: published deterioration/action matrices,
    /// action costs [0, 10, 100, 1000, 2000], β = [4.2, 3.5, 3.0, 2.5],
    /// C_f = 100,000, γ = 1/1.03, Dirichlet restart parameters fitted to
    /// inventory data, 200-year horizon, 20-step training episodes.
    fn default() -> Self {
        let transitions = [
            // do nothing
            [
                [0.9381, 0.0619, 0.0, 0.0],
                [0.0, 0.9356, 0.0644, 0.0],
                [0.0, 0.0, 0.8888, 0.1112],
                [0.0, 0.0, 0.0, 1.0],
            ],
            // maintenance (second row as published; repaired on load)
            [
                [0.99, 0.01, 0.0, 0.0],
                [0.15, 0.975, 0.01, 0.0],
                [0.0, 0.03, 0.95, 0.02],
                [0.0, 0.0, 0.0, 1.0],
            ],
            // repair
            [
                [1.0, 0.0, 0.0, 0.0],
                [0.25, 0.725, 0.025, 0.0],
                [0.0, 0.5, 0.45, 0.05],
                [0.0, 0.0, 0.5, 0.5],
            ],
            // rehabilitation
            [
                [1.0, 0.0, 0.0, 0.0],
                [0.5, 0.5, 0.0, 0.0],
                [0.4, 0.5, 0.1, 0.0],
                [0.4, 0.5, 0.1, 0.0],
            ],
            // replacement
            [
                [1.0, 0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0, 0.0],
            ],
        ];
        EnvConfig::from_parts(
            transitions,
            [0.0, 10.0, 100.0, 1000.0, 2000.0],
            [4.2, 3.5, 3.0, 2.5],
            100_000.0,
            1.0 / 1.03,
            [0.1496, 0.1114, 0.0500, 0.0393],
            200,
            20,
        )
        .expect("embedded defaults are valid")
    }
}

impl EnvConfig {
    /// Validates matrices and scalars; rows off stochasticity by more than
    /// 1e−6 are proportionally renormalized with a recorded warning.
    pub fn from_parts(
        raw_transitions: [[[f64; N_CS]; N_CS]; N_ACTIONS],
        action_costs: [f64; N_ACTIONS],
        beta: [f64; N_CS],
        failure_cost: f64,
        discount: f64,
        dirichlet_theta: [f64; N_CS],
        horizon: usize,
        train_episode_len: usize,
    ) -> Result<Self> {
        if !(0.0 < discount && discount < 1.0) {
            return Err(Error::InvalidArgument(format!("discount {discount} outside (0,1)")));
        }
        if action_costs.iter().any(|c| *c < 0.0) {
            return Err(Error::InvalidArgument("action costs must be non-negative".into()));
        }
        if failure_cost < 0.0 {
            return Err(Error::InvalidArgument("failure cost must be non-negative".into()));
        }
        if dirichlet_theta.iter().any(|t| *t <= 0.0) {
            return Err(Error::InvalidArgument("dirichlet theta must be positive".into()));
        }
        if horizon == 0 || train_episode_len == 0 {
            return Err(Error::InvalidArgument("horizons must be ≥ 1".into()));
        }
        let mut transitions = raw_transitions;
        let mut warnings = Vec::new();
        for (a, m) in transitions.iter_mut().enumerate() {
            for (i, row) in m.iter_mut().enumerate() {
                if row.iter().any(|p| *p < 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "transition({a}) row {i} has a negative entry"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if sum <= 0.0 {
                    return Err(Error::InvalidArgument(format!("transition({a}) row {i} sums to 0")));
                }
                if (sum - 1.0).abs() > 1e-6 {
                    warnings.push(format!(
                        "transition({a}) row {i} sums to {sum}; renormalized proportionally"
                    ));
                }
                if sum != 1.0 {
                    row.iter_mut().for_each(|p| *p /= sum);
                }
            }
        }
        Ok(Self {
            raw_transitions,
            transitions,
            action_costs,
            beta,
            failure_cost,
            discount,
            dirichlet_theta,
            horizon,
            train_episode_len,
            warnings,
        })
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Validated (row-stochastic) transition matrix for an action.
    pub fn transition_matrix(&self, a: usize) -> Result<&[[f64; N_CS]; N_CS]> {
        self.transitions.get(a).ok_or_else(|| Error::InvalidArgument(format!("action {a} out of range")))
    }

    /// Matrices exactly as configured, before the stochasticity repair.
    pub fn raw_transition_matrix(&self, a: usize) -> &[[f64; N_CS]; N_CS] {
        &self.raw_transitions[a]
    }

    pub fn validation_warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Successor state T(a)ᵀ s.
    pub fn transition(&self, s: &CsVector, a: usize) -> Result<CsVector> {
        let m = self.transition_matrix(a)?;
        let mut next = [0.0; N_CS];
        for i in 0..N_CS {
            let si = s[i];
            if si != 0.0 {
                for j in 0..N_CS {
                    next[j] += si * m[i][j];
                }
            }
        }
        Ok(next)
    }

    /// Σᵢ sᵢ·Φ(−βᵢ).
    pub fn failure_prob(&self, s: &CsVector) -> f64 {
        s.iter().zip(&self.beta).map(|(si, b)| si * normal_cdf(-b)).sum()
    }

    /// C_f · failure probability.
    pub fn annual_risk(&self, s: &CsVector) -> f64 {
        self.failure_cost * self.failure_prob(s)
    }

    /// Reliability index β(s) = −Φ⁻¹(p_f(s)).
    pub fn reliability_index(&self, s: &CsVector) -> f64 {
        -normal_quantile(self.failure_prob(s).clamp(1e-300, 1.0 - 1e-16))
    }

    /// Charges action cost + risk at the current state, then transitions.
    pub fn step(&self, s: &CsVector, a: usize) -> Result<StepOutcome> {
        let action_cost = *self
            .action_costs
            .get(a)
            .ok_or_else(|| Error::InvalidArgument(format!("action {a} out of range")))?;
        let risk = self.annual_risk(s);
        Ok(StepOutcome { next_state: self.transition(s, a)?, cost: action_cost + risk, action_cost, risk })
    }

    /// Dirichlet(θ) restart sample via normalized Gamma draws.
    pub fn reset<R: Rng>(&self, rng: &mut R) -> CsVector {
        sample_dirichlet(&self.dirichlet_theta, rng)
    }

    /// Discounted life-cycle cost Σ_{t=1..H} γᵗ·cost(t) following `policy`
    /// from `start`; also returns the visited trajectory. With
    /// `deterministic`, actions are the policy's greedy choices; otherwise
    /// they are sampled from its action distribution.
    pub fn rollout<P: Policy + ?Sized, R: Rng>(
        &self,
        policy: &P,
        start: CsVector,
        horizon: usize,
        deterministic: bool,
        rng: &mut R,
    ) -> Result<(f64, Vec<TrajectoryPoint>)> {
        let mut s = start;
        let mut lcc = 0.0;
        let mut disc = 1.0;
        let mut traj = Vec::with_capacity(horizon);
        for t in 1..=horizon {
            let a = if deterministic {
                policy.act(&s)
            } else {
                let p = policy.probs(&s);
                sample_categorical(&p, rng)
            };
            let out = self.step(&s, a)?;
            disc *= self.discount;
            lcc += disc * out.cost;
            traj.push(TrajectoryPoint { t, state: s, action: a, cost: out.cost, risk: out.risk });
            s = out.next_state;
        }
        Ok((lcc, traj))
    }

    /// Discounted cost only (no trajectory allocation).
    pub fn episode_cost<P: Policy + ?Sized>(&self, policy: &P, start: CsVector, horizon: usize) -> Result<f64> {
        let mut s = start;
        let mut lcc = 0.0;
        let mut disc = 1.0;
        for _ in 1..=horizon {
            let a = policy.act(&s);
            let out = self.step(&s, a)?;
            disc *= self.discount;
            lcc += disc * out.cost;
            s = out.next_state;
        }
        Ok(lcc)
    }

    /// Monte-Carlo policy evaluation: `episodes` Dirichlet restarts, full
    /// horizon, deterministic actions, common random numbers per episode
    /// index. Returns (mean, std) and the per-episode costs.
    pub fn evaluate_policy<P: Policy + ?Sized>(
        &self,
        policy: &P,
        episodes: usize,
        eval_seed: u64,
    ) -> Result<(f64, f64, Vec<f64>)> {
        if episodes == 0 {
            return Err(Error::InvalidArgument("episodes must be ≥ 1".into()));
        }
        let costs: Vec<f64> = (0..episodes)
            .into_par_iter()
            .map(|ep| {
                let mut rng = crate::rng::stream_rng(eval_seed, EVAL_STREAM_BASE + ep as u64);
                let start = self.reset(&mut rng);
                self.episode_cost(policy, start, self.horizon)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean = costs.iter().sum::<f64>() / costs.len() as f64;
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / costs.len() as f64;
        Ok((mean, var.sqrt(), costs))
    }
}

/// Stream offset separating evaluation episodes from training streams.
pub const EVAL_STREAM_BASE: u64 = 1 << 32;

/// Samples an index from an (unnormalized-tolerant) probability vector.
pub fn sample_categorical<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &pi) in p.iter().enumerate() {
        u -= pi;
        if u <= 0.0 {
            return i;
        }
    }
    p.len() - 1
}

/// Dirichlet(θ) sample via per-component Gamma(θᵢ, 1) draws normalized to the
/// simplex (valid for shapes < 1).
pub fn sample_dirichlet<R: Rng>(theta: &[f64; N_CS], rng: &mut R) -> CsVector {
    let mut g = [0.0; N_CS];
    let mut sum = 0.0;
    for i in 0..N_CS {
        let d = Gamma::new(theta[i], 1.0).expect("positive shape");
        let v: f64 = d.sample(rng);
        g[i] = v;
        sum += v;
    }
    if sum <= 0.0 {
        // all draws underflowed; fall back to the mean direction
        let t: f64 = theta.iter().sum();
        for i in 0..N_CS {
            g[i] = theta[i] / t;
        }
        return g;
    }
    for v in g.iter_mut() {
        *v /= sum;
    }
    g
}

/// Maximum-likelihood Dirichlet parameters by fixed-point iteration on the
/// digamma conditions ψ(θᵢ) = ψ(Σθ) + mean ln xᵢ. Zero components are lifted
/// to the smallest positive double so their logarithm stays finite; the bias
/// this introduces is negligible next to sampling noise. Converges when the
/// largest relative parameter change drops below 1e−10; errors after 10,000
/// iterations.
pub fn fit_dirichlet(samples: &[CsVector]) -> Result<[f64; N_CS]> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let n = samples.len() as f64;
    let mut mean_log = [0.0; N_CS];
    let mut mean = [0.0; N_CS];
    let mut mean_sq = [0.0; N_CS];
    for s in samples {
        for i in 0..N_CS {
            mean_log[i] += s[i].max(f64::MIN_POSITIVE).ln() / n;
            mean[i] += s[i] / n;
            mean_sq[i] += s[i] * s[i] / n;
        }
    }
    // moment-matching initialization from the first component's variance
    let var0 = (mean_sq[0] - mean[0] * mean[0]).max(1e-12);
    let s0 = ((mean[0] * (1.0 - mean[0])) / var0 - 1.0).max(1e-3);
    let mut theta = [0.0; N_CS];
    for i in 0..N_CS {
        theta[i] = (mean[i] * s0).max(1e-6);
    }
    for _ in 0..10_000 {
        let total: f64 = theta.iter().sum();
        let psi_total = digamma(total);
        let mut next = [0.0; N_CS];
        let mut delta: f64 = 0.0;
        for i in 0..N_CS {
            next[i] = inv_digamma(psi_total + mean_log[i]);
            delta = delta.max((next[i] - theta[i]).abs() / theta[i].max(1.0));
        }
        theta = next;
        if delta < 1e-10 {
            return Ok(theta);
        }
    }
    Err(Error::Numeric("Dirichlet MLE did not converge within 10,000 iterations".into()))
}

/// Writes a trajectory as CSV (t, s1..s4, action, cost, risk).
pub fn trajectory_to_csv<W: std::io::Write>(traj: &[TrajectoryPoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "s1", "s2", "s3", "s4", "action", "cost", "risk"])?;
    for p in traj {
        wtr.write_record(&[
            p.t.to_string(),
            p.state[0].to_string(),
            p.state[1].to_string(),
            p.state[2].to_string(),
            p.state[3].to_string(),
            p.action.to_string(),
            p.cost.to_string(),
            p.risk.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
