//! Interpretable reference policies: a condition-based table from value
//! iteration on the four pure-state MDP, a reliability-threshold rule tuned
//! by a small genetic algorithm, and side-by-side policy evaluation.

use crate::envsim::{CsVector, EnvConfig, Policy, N_ACTIONS, N_CS};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Condition table reported with the published element model; value iteration
/// under the repaired (renormalized) maintenance row may disagree, so
/// comparisons print both rather than forcing agreement.
pub const REFERENCE_CONDITION_TABLE: [usize; N_CS] = [1, 2, 2, 3];

/// Reliability-index range spanned by the pure condition states.
pub const BETA_RANGE: (f64, f64) = (2.5, 4.2);

const MIN_GAP: f64 = 1e-6;

/// Index of the most prevalent condition state; ties break toward the worse
/// (higher) state.
pub fn dominant_cs(s: &CsVector) -> usize {
    let mut best = 0;
    for i in 1..N_CS {
        if s[i] >= s[best] {
            best = i;
        }
    }
    best
}

/// Per-condition-state action table applied to the dominant CS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionPolicy {
    pub actions: [usize; N_CS],
}

impl ConditionPolicy {
    pub fn new(actions: [usize; N_CS]) -> Result<Self> {
        if actions.iter().any(|a| *a >= N_ACTIONS) {
            return Err(Error::InvalidArgument(format!("actions out of range: {actions:?}")));
        }
        Ok(Self { actions })
    }
}

impl Policy for ConditionPolicy {
    fn act(&self, s: &[f64]) -> usize {
        let cs: CsVector = s.try_into().expect("state dimension");
        self.actions[dominant_cs(&cs)]
    }
}

/// Value-iteration output on the pure-state MDP.
#[derive(Debug, Clone, Serialize)]
pub struct ViResult {
    pub policy: ConditionPolicy,
    pub values: [f64; N_CS],
    pub iterations: usize,
    /// sup-norm change per sweep
    pub residuals: Vec<f64>,
}

/// Value iteration over explicit per-state costs and transition rows.
/// `costs[s][a]` is charged before transitioning by row `s` of matrix `a`.
pub fn value_iteration_with(
    transitions: &[[[f64; N_CS]; N_CS]; N_ACTIONS],
    costs: &[[f64; N_ACTIONS]; N_CS],
    gamma: f64,
    tol: f64,
) -> ViResult {
    let mut v = [0.0; N_CS];
    let mut residuals = Vec::new();
    let cap = 1_000_000;
    for _ in 0..cap {
        let mut next = [0.0; N_CS];
        for s in 0..N_CS {
            let mut best = f64::INFINITY;
            for a in 0..N_ACTIONS {
                let cont: f64 = (0..N_CS).map(|s2| transitions[a][s][s2] * v[s2]).sum();
                let q = costs[s][a] + gamma * cont;
                if q < best {
                    best = q;
                }
            }
            next[s] = best;
        }
        let res = (0..N_CS).map(|s| (next[s] - v[s]).abs()).fold(0.0, f64::max);
        residuals.push(res);
        v = next;
        if res < tol {
            break;
        }
    }
    let mut policy = [0usize; N_CS];
    for s in 0..N_CS {
        let mut best = f64::INFINITY;
        for a in 0..N_ACTIONS {
            let cont: f64 = (0..N_CS).map(|s2| transitions[a][s][s2] * v[s2]).sum();
            let q = costs[s][a] + gamma * cont;
            if q < best - 1e-12 {
                best = q;
                policy[s] = a;
            }
        }
    }
    ViResult { policy: ConditionPolicy { actions: policy }, values: v, iterations: residuals.len(), residuals }
}

/// Pure-state per-action costs for an environment: action cost plus the
/// vertex risk C_f·Φ(−β_s).
pub fn pure_state_costs(env: &EnvConfig) -> [[f64; N_ACTIONS]; N_CS] {
    let mut costs = [[0.0; N_ACTIONS]; N_CS];
    for s in 0..N_CS {
        let mut vertex = [0.0; N_CS];
        vertex[s] = 1.0;
        let risk = env.annual_risk(&vertex);
        for a in 0..N_ACTIONS {
            costs[s][a] = env.action_costs[a] + risk;
        }
    }
    costs
}

/// Value iteration on the environment's validated transition rows.
pub fn value_iteration(env: &EnvConfig, gamma: f64, tol: f64) -> Result<ViResult> {
    let mut transitions = [[[0.0; N_CS]; N_CS]; N_ACTIONS];
    for (a, m) in transitions.iter_mut().enumerate() {
        *m = *env.transition_matrix(a)?;
    }
    Ok(value_iteration_with(&transitions, &pure_state_costs(env), gamma, tol))
}

/// Same MDP built from the matrices exactly as configured (no row repair);
/// useful for reporting how much the repair moves the greedy table.
pub fn value_iteration_raw(env: &EnvConfig, gamma: f64, tol: f64) -> ViResult {
    let mut transitions = [[[0.0; N_CS]; N_CS]; N_ACTIONS];
    for (a, m) in transitions.iter_mut().enumerate() {
        *m = *env.raw_transition_matrix(a);
    }
    value_iteration_with(&transitions, &pure_state_costs(env), gamma, tol)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReliabilityPolicyJson {
    thresholds: Vec<f64>,
    actions: Vec<usize>,
    cs_beta: Vec<f64>,
}

/// Threshold rule on the state's reliability index β(s) = −Φ⁻¹(p_f(s)):
/// strictly decreasing cut points partition [2.5, 4.2] into bins, each bin
/// mapped to an action (default: bin k → action k, i.e. the number of
/// thresholds lying above β).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ReliabilityPolicyJson", into = "ReliabilityPolicyJson")]
pub struct ReliabilityPolicy {
    thresholds: Vec<f64>,
    actions: Vec<usize>,
    cs_beta: [f64; N_CS],
}

impl TryFrom<ReliabilityPolicyJson> for ReliabilityPolicy {
    type Error = Error;

    fn try_from(j: ReliabilityPolicyJson) -> Result<Self> {
        let cs_beta: [f64; N_CS] = j
            .cs_beta
            .as_slice()
            .try_into()
            .map_err(|_| Error::Dimension("cs_beta must have 4 entries".into()))?;
        ReliabilityPolicy::with_actions(j.thresholds, j.actions, cs_beta)
    }
}

impl From<ReliabilityPolicy> for ReliabilityPolicyJson {
    fn from(p: ReliabilityPolicy) -> Self {
        Self { thresholds: p.thresholds, actions: p.actions, cs_beta: p.cs_beta.to_vec() }
    }
}

impl ReliabilityPolicy {
    /// Bin k (counting thresholds above β) maps to action k.
    pub fn new(thresholds: Vec<f64>, cs_beta: [f64; N_CS]) -> Result<Self> {
        let actions = (0..=thresholds.len()).collect();
        Self::with_actions(thresholds, actions, cs_beta)
    }

    pub fn with_actions(thresholds: Vec<f64>, actions: Vec<usize>, cs_beta: [f64; N_CS]) -> Result<Self> {
        if actions.len() != thresholds.len() + 1 {
            return Err(Error::Dimension(format!(
                "{} thresholds need {} bin actions, got {}",
                thresholds.len(),
                thresholds.len() + 1,
                actions.len()
            )));
        }
        if actions.iter().any(|a| *a >= N_ACTIONS) {
            return Err(Error::InvalidArgument("bin action out of range".into()));
        }
        for w in thresholds.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::InvalidArgument(format!(
                    "thresholds must be strictly decreasing: {thresholds:?}"
                )));
            }
        }
        if thresholds.iter().any(|t| *t < BETA_RANGE.0 || *t > BETA_RANGE.1) {
            return Err(Error::InvalidArgument(format!(
                "thresholds must lie in [{}, {}]: {thresholds:?}",
                BETA_RANGE.0, BETA_RANGE.1
            )));
        }
        Ok(Self { thresholds, actions, cs_beta })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn bin_actions(&self) -> &[usize] {
        &self.actions
    }

    /// β(s) from the stored pure-state reliability indices.
    pub fn index(&self, s: &CsVector) -> f64 {
        let pf: f64 = s.iter().zip(&self.cs_beta).map(|(si, b)| si * crate::special::normal_cdf(-b)).sum();
        -crate::special::normal_quantile(pf.clamp(1e-300, 1.0 - 1e-16))
    }
}

impl Policy for ReliabilityPolicy {
    fn act(&self, s: &[f64]) -> usize {
        let cs: CsVector = s.try_into().expect("state dimension");
        let beta = self.index(&cs);
        let bin = self.thresholds.iter().filter(|t| **t > beta).count();
        self.actions[bin]
    }
}

/// Projects a candidate threshold vector onto the feasible set: clamped to
/// [2.5, 4.2], sorted descending, separated by at least a small gap.
pub fn repair_thresholds(raw: &[f64; N_CS]) -> [f64; N_CS] {
    let mut t = *raw;
    for v in t.iter_mut() {
        *v = v.clamp(BETA_RANGE.0, BETA_RANGE.1);
    }
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for i in 1..N_CS {
        t[i] = t[i].min(t[i - 1] - MIN_GAP);
    }
    t[N_CS - 1] = t[N_CS - 1].max(BETA_RANGE.0);
    for i in (0..N_CS - 1).rev() {
        t[i] = t[i].max(t[i + 1] + MIN_GAP);
    }
    t
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament_k: usize,
    pub mutation_sigma: f64,
    pub mutation_rate: f64,
    pub elitism: usize,
    /// common-random-number episodes per fitness evaluation
    pub fitness_episodes: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 100,
            tournament_k: 3,
            mutation_sigma: 0.05,
            mutation_rate: 0.2,
            elitism: 2,
            fitness_episodes: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GaGeneration {
    pub generation: usize,
    /// mean LCC of the best individual so far
    pub best_lcc: f64,
    pub mean_lcc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaResult {
    pub policy: ReliabilityPolicy,
    pub best_lcc: f64,
    pub history: Vec<GaGeneration>,
}

const GA_EVOLVE_STREAM: u64 = 900_000_001;

/// Tunes the four reliability thresholds by a steady generational GA:
/// tournament selection, uniform crossover, Gaussian mutation, sorted repair,
/// and elitism. Fitness is the negated mean LCC over a fixed set of
/// common-random-number episodes, so best-so-far fitness is monotone.
pub fn ga_optimize(env: &EnvConfig, config: &GaConfig, seed: u64) -> Result<GaResult> {
    if config.population < 2 || config.elitism >= config.population || config.tournament_k == 0 {
        return Err(Error::InvalidArgument("degenerate GA configuration".into()));
    }
    if config.fitness_episodes == 0 || config.generations == 0 {
        return Err(Error::InvalidArgument("GA needs ≥1 generation and ≥1 episode".into()));
    }
    let mut rng = stream_rng(seed, GA_EVOLVE_STREAM);
    let mut pop: Vec<[f64; N_CS]> = (0..config.population)
        .map(|_| {
            let mut t = [0.0; N_CS];
            for v in t.iter_mut() {
                *v = rng.gen_range(BETA_RANGE.0..BETA_RANGE.1);
            }
            repair_thresholds(&t)
        })
        .collect();

    let lcc_of = |t: &[f64; N_CS]| -> Result<f64> {
        let p = ReliabilityPolicy::new(t.to_vec(), env.beta)?;
        let (mean, _, _) = env.evaluate_policy(&p, config.fitness_episodes, seed)?;
        Ok(mean)
    };

    let mut history = Vec::with_capacity(config.generations);
    let mut best: Option<([f64; N_CS], f64)> = None;
    for generation in 0..config.generations {
        let costs: Vec<f64> = pop.par_iter().map(|t| lcc_of(t)).collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|a, b| costs[*a].partial_cmp(&costs[*b]).unwrap());
        let gen_best = order[0];
        if best.as_ref().map_or(true, |(_, c)| costs[gen_best] < *c) {
            best = Some((pop[gen_best], costs[gen_best]));
        }
        history.push(GaGeneration {
            generation,
            best_lcc: best.as_ref().unwrap().1,
            mean_lcc: costs.iter().sum::<f64>() / costs.len() as f64,
        });

        let mut next: Vec<[f64; N_CS]> = order.iter().take(config.elitism).map(|i| pop[*i]).collect();
        while next.len() < config.population {
            let pa = tournament(&costs, config.tournament_k, &mut rng);
            let pb = tournament(&costs, config.tournament_k, &mut rng);
            let mut child = [0.0; N_CS];
            for g in 0..N_CS {
                child[g] = if rng.gen_bool(0.5) { pop[pa][g] } else { pop[pb][g] };
                if rng.gen_bool(config.mutation_rate) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    child[g] += config.mutation_sigma * z;
                }
            }
            next.push(repair_thresholds(&child));
        }
        pop = next;
    }
    let (thresholds, best_lcc) = best.unwrap();
    Ok(GaResult { policy: ReliabilityPolicy::new(thresholds.to_vec(), env.beta)?, best_lcc, history })
}

fn tournament<R: Rng>(costs: &[f64], k: usize, rng: &mut R) -> usize {
    let mut best = rng.gen_range(0..costs.len());
    for _ in 1..k {
        let c = rng.gen_range(0..costs.len());
        if costs[c] < costs[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub name: String,
    pub mean_lcc: f64,
    pub std_lcc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub episodes: usize,
    pub seed: u64,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    /// Row indices sorted by ascending mean LCC.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.sort_by(|a, b| self.rows[*a].mean_lcc.partial_cmp(&self.rows[*b].mean_lcc).unwrap());
        idx
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,mean_lcc,std_lcc\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.name, r.mean_lcc, r.std_lcc));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(6).max(6);
        let mut out = format!(
            "{:<width$}  {:>12}  {:>12}\n",
            "policy", "mean LCC", "std", width = width
        );
        for i in self.ranking() {
            let r = &self.rows[i];
            out.push_str(&format!(
                "{:<width$}  {:>12.2}  {:>12.2}\n",
                r.name, r.mean_lcc, r.std_lcc, width = width
            ));
        }
        out
    }
}

/// Evaluates every policy on the same `episodes` common-random-number
/// episodes (identical starting states per episode index).
pub fn compare_policies(
    env: &EnvConfig,
    policies: &[(&str, &dyn Policy)],
    episodes: usize,
    seed: u64,
) -> Result<CompareReport> {
    if policies.is_empty() {
        return Err(Error::InvalidArgument("need at least one policy".into()));
    }
    let mut rows = Vec::with_capacity(policies.len());
    for (name, p) in policies {
        let (mean, std, _) = env.evaluate_policy(*p, episodes, seed)?;
        rows.push(CompareRow { name: (*name).to_string(), mean_lcc: mean, std_lcc: std });
    }
    Ok(CompareReport { episodes, seed, rows })
}
