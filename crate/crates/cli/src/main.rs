//! `softtree`: train soft decision trees (supervised or by PPO on the
//! deterioration environment), freeze and prune them into compact oblique
//! policy trees, and benchmark against dynamic-programming and
//! genetic-algorithm baselines.
//!
//! Exit codes: 0 success, 1 usage/configuration/io error, 2 numeric failure.

mod commands;
mod io_util;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use softtree_core::Error;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "softtree", version, about, max_term_width = 100)]
struct Cli {
    /// Master seed for every randomized stage (data, init, training, eval)
    #[arg(long, global = true, env = "SOFTTREE_SEED")]
    seed: Option<u64>,
    /// Worker threads for rollouts and GA fitness; 1 keeps runs exactly
    /// reproducible across machines
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic four-class benchmark dataset as CSV
    GenData {
        /// number of points
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// output CSV (columns x1,x2,label,split)
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a soft-tree classifier on a generated dataset
    TrainClf {
        /// dataset CSV from gen-data
        #[arg(long)]
        data: PathBuf,
        /// output model JSON
        #[arg(long)]
        out: PathBuf,
        /// per-iteration metrics JSON (loss, temperature, accuracy)
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// training config JSON to start from (flags below override it)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// full passes over the training split
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        l1_lambda: Option<f64>,
        /// starting gate temperature
        #[arg(long)]
        t0: Option<f64>,
        /// final gate temperature
        #[arg(long)]
        tmin: Option<f64>,
        #[arg(long)]
        anneal_stages: Option<usize>,
    },
    /// Report a model's accuracy on one split of a dataset
    EvalClf {
        /// soft-tree or oblique-tree model JSON
        #[arg(long)]
        model: PathBuf,
        /// dataset CSV the model was trained on
        #[arg(long)]
        data: PathBuf,
        /// train, val, or test
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Convert a soft tree into a hard oblique tree (sign-threshold gates)
    Freeze {
        /// soft-tree model JSON
        #[arg(long)]
        model: PathBuf,
        /// output oblique-tree JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Prune an oblique tree: drop near-trivial splits, unreachable branches,
    /// and redundant leaves (soft-tree inputs are frozen first)
    Prune {
        /// oblique-tree (or soft-tree) model JSON
        #[arg(long)]
        model: PathBuf,
        /// trivial-split threshold relative to max(|bias|, 1)
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        /// output oblique-tree JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy with PPO on the deterioration environment
    TrainRl {
        /// actor kind: tree or mlp (defaults to the config's actor)
        #[arg(long)]
        actor: Option<String>,
        /// output actor JSON
        #[arg(long)]
        out: PathBuf,
        /// also write the trained critic JSON
        #[arg(long)]
        critic: Option<PathBuf>,
        /// learning-curve CSV (batch, mean_cost, temperature)
        #[arg(long)]
        curve: Option<PathBuf>,
        /// environment JSON (defaults to the built-in element model)
        #[arg(long)]
        env: Option<PathBuf>,
        /// PPO config JSON to start from (flags below override it)
        #[arg(long)]
        config: Option<PathBuf>,
        /// shrink to the reduced benchmark budget (depth 7, 30 batches)
        #[arg(long, default_value_t = false)]
        desk_scale: bool,
        /// write actor checkpoints into this directory
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// checkpoint every N batches (with --checkpoint-dir)
        #[arg(long, default_value_t = 10)]
        checkpoint_every: usize,
        #[arg(long)]
        tree_depth: Option<usize>,
        #[arg(long)]
        total_batches: Option<usize>,
        #[arg(long)]
        episodes_per_batch: Option<usize>,
        #[arg(long)]
        episode_len: Option<usize>,
        #[arg(long)]
        minibatch_size: Option<usize>,
        #[arg(long)]
        minibatches_per_batch: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        clip: Option<f64>,
        #[arg(long)]
        entropy_coef: Option<f64>,
        #[arg(long)]
        critic_coef: Option<f64>,
        #[arg(long)]
        discount: Option<f64>,
        #[arg(long)]
        gae_lambda: Option<f64>,
        #[arg(long)]
        l1_lambda: Option<f64>,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long)]
        tmin: Option<f64>,
        #[arg(long)]
        anneal_stages: Option<usize>,
        #[arg(long)]
        reward_scale: Option<f64>,
    },
    /// Freeze and prune a trained tree actor into an oblique policy tree
    ExtractPolicy {
        /// tree-actor JSON from train-rl
        #[arg(long)]
        model: PathBuf,
        /// trivial-split threshold
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        /// output oblique policy JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Graft a hand-written trigger rule onto an oblique policy tree
    AugmentPolicy {
        /// oblique policy JSON
        #[arg(long)]
        model: PathBuf,
        /// rule JSON: {"weights": [...], "bias": b, "action": a, "position": "LR.."}
        #[arg(long)]
        rule: PathBuf,
        /// output oblique policy JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo evaluation of any policy file on the environment
    EvalPolicy {
        /// policy JSON: oblique tree, tree/MLP actor, condition table, or
        /// reliability thresholds
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        /// environment JSON
        #[arg(long)]
        env: Option<PathBuf>,
        /// write one deterministic rollout as CSV
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Solve the per-condition-state MDP by value iteration
    BaselineDp {
        /// environment JSON
        #[arg(long)]
        env: Option<PathBuf>,
        /// output condition-policy JSON
        #[arg(long)]
        out: PathBuf,
        /// convergence tolerance on the value-function residual
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Tune reliability-index thresholds with a genetic algorithm
    BaselineGa {
        /// environment JSON
        #[arg(long)]
        env: Option<PathBuf>,
        /// output reliability-policy JSON
        #[arg(long)]
        out: PathBuf,
        /// per-generation best/mean fitness CSV
        #[arg(long)]
        history: Option<PathBuf>,
        /// GA config JSON to start from (flags below override it)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        tournament_k: Option<usize>,
        #[arg(long)]
        mutation_sigma: Option<f64>,
        #[arg(long)]
        mutation_rate: Option<f64>,
        #[arg(long)]
        elitism: Option<usize>,
        #[arg(long)]
        fitness_episodes: Option<usize>,
    },
    /// Evaluate several policy files on shared episodes and rank them
    Compare {
        /// comma-separated policy JSON paths
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        /// environment JSON
        #[arg(long)]
        env: Option<PathBuf>,
        /// also write the report as CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit Dirichlet parameters to condition-state samples by maximum
    /// likelihood
    FitDirichlet {
        /// CSV of samples (columns s1,s2,s3,s4)
        #[arg(long)]
        data: PathBuf,
        /// output JSON {"theta": [...]}
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an oblique tree as JSON, Graphviz DOT, or case-style rule text
    ExportTree {
        /// oblique-tree (or soft-tree) model JSON
        #[arg(long)]
        model: PathBuf,
        /// json, dot, or rule-text
        #[arg(long, default_value = "rule-text")]
        format: String,
        /// output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// comma-separated feature names
        #[arg(long, value_delimiter = ',')]
        features: Option<Vec<String>>,
        /// comma-separated class/action names
        #[arg(long, value_delimiter = ',')]
        labels: Option<Vec<String>>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        std::process::exit(1);
    }
    if let Err(e) =
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()
    {
        eprintln!("error: thread pool: {e}");
        std::process::exit(1);
    }

    match commands::dispatch(cli.command, cli.seed) {
        Ok(()) => {}
        Err(e @ Error::Numeric(_)) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
