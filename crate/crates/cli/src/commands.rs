//! One handler per subcommand. Results go to stdout; resolved configs and
//! environment warnings go to stderr.

use crate::io_util::{
    announce_config, read_json, read_tree_model, write_json, write_text, AnyPolicy, TreeModel,
};
use crate::Command;
use serde::Serialize;
use softtree_core::baselines::{
    compare_policies, ga_optimize, value_iteration, GaConfig, REFERENCE_CONDITION_TABLE,
};
use softtree_core::envsim::{CsVector, N_CS};
use softtree_core::oblique::{freeze, prune_all, to_dot, to_rule_text};
use softtree_core::rl::{
    augment_policy, curve_to_csv, extract_policy, train_ppo_with, Actor, ActorKind, AugmentRule,
    BatchHook,
};
use softtree_core::supervised::{
    evaluate_accuracy, generate_dataset, save_metrics, train_classifier, Scaler, Split,
};
use softtree_core::{ClassDataset, EnvConfig, Error, Mlp, PpoConfig, Result, SoftTree, TrainConfig};
use std::path::{Path, PathBuf};

pub fn dispatch(cmd: Command, seed: Option<u64>) -> Result<()> {
    match cmd {
        Command::GenData { n, out } => gen_data(n, out, seed.unwrap_or(0)),
        Command::TrainClf {
            data,
            out,
            metrics,
            config,
            depth,
            learning_rate,
            batch_size,
            iterations,
            l1_lambda,
            t0,
            tmin,
            anneal_stages,
        } => {
            let mut cfg: TrainConfig = load_config(config.as_deref())?;
            set(&mut cfg.depth, depth);
            set(&mut cfg.learning_rate, learning_rate);
            set(&mut cfg.batch_size, batch_size);
            set(&mut cfg.iterations, iterations);
            set(&mut cfg.l1_lambda, l1_lambda);
            set(&mut cfg.t0, t0);
            set(&mut cfg.tmin, tmin);
            set(&mut cfg.anneal_stages, anneal_stages);
            set(&mut cfg.seed, seed);
            train_clf(data, out, metrics, cfg)
        }
        Command::EvalClf { model, data, split } => eval_clf(model, data, &split),
        Command::Freeze { model, out } => freeze_cmd(model, out),
        Command::Prune { model, epsilon, out } => prune_cmd(model, epsilon, out),
        Command::TrainRl {
            actor,
            out,
            critic,
            curve,
            env,
            config,
            desk_scale,
            checkpoint_dir,
            checkpoint_every,
            tree_depth,
            total_batches,
            episodes_per_batch,
            episode_len,
            minibatch_size,
            minibatches_per_batch,
            learning_rate,
            clip,
            entropy_coef,
            critic_coef,
            discount,
            gae_lambda,
            l1_lambda,
            t0,
            tmin,
            anneal_stages,
            reward_scale,
        } => {
            let mut cfg: PpoConfig = load_config(config.as_deref())?;
            if desk_scale {
                cfg = cfg.desk_scale();
            }
            if let Some(kind) = actor {
                cfg.actor = parse_actor_kind(&kind)?;
            }
            set(&mut cfg.tree_depth, tree_depth);
            set(&mut cfg.total_batches, total_batches);
            set(&mut cfg.episodes_per_batch, episodes_per_batch);
            set(&mut cfg.episode_len, episode_len);
            set(&mut cfg.minibatch_size, minibatch_size);
            set(&mut cfg.minibatches_per_batch, minibatches_per_batch);
            set(&mut cfg.learning_rate, learning_rate);
            set(&mut cfg.clip, clip);
            set(&mut cfg.entropy_coef, entropy_coef);
            set(&mut cfg.critic_coef, critic_coef);
            set(&mut cfg.discount, discount);
            set(&mut cfg.gae_lambda, gae_lambda);
            set(&mut cfg.l1_lambda, l1_lambda);
            set(&mut cfg.t0, t0);
            set(&mut cfg.tmin, tmin);
            set(&mut cfg.anneal_stages, anneal_stages);
            set(&mut cfg.reward_scale, reward_scale);
            train_rl(TrainRlArgs {
                out,
                critic,
                curve,
                env,
                checkpoint_dir,
                checkpoint_every,
                cfg,
                seed: seed.unwrap_or(0),
            })
        }
        Command::ExtractPolicy { model, epsilon, out } => extract_cmd(model, epsilon, out),
        Command::AugmentPolicy { model, rule, out } => augment_cmd(model, rule, out),
        Command::EvalPolicy { policy, episodes, env, trajectory } => {
            eval_policy(policy, episodes, env, trajectory, seed.unwrap_or(0))
        }
        Command::BaselineDp { env, out, tol } => baseline_dp(env, out, tol),
        Command::BaselineGa {
            env,
            out,
            history,
            config,
            population,
            generations,
            tournament_k,
            mutation_sigma,
            mutation_rate,
            elitism,
            fitness_episodes,
        } => {
            let mut cfg: GaConfig = load_config(config.as_deref())?;
            set(&mut cfg.population, population);
            set(&mut cfg.generations, generations);
            set(&mut cfg.tournament_k, tournament_k);
            set(&mut cfg.mutation_sigma, mutation_sigma);
            set(&mut cfg.mutation_rate, mutation_rate);
            set(&mut cfg.elitism, elitism);
            set(&mut cfg.fitness_episodes, fitness_episodes);
            baseline_ga(env, out, history, cfg, seed.unwrap_or(0))
        }
        Command::Compare { policies, episodes, env, out } => {
            compare(policies, episodes, env, out, seed.unwrap_or(0))
        }
        Command::FitDirichlet { data, out } => fit_dirichlet_cmd(data, out),
        Command::ExportTree { model, format, out, features, labels } => {
            export_tree(model, &format, out, features, labels)
        }
    }
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

fn load_config<T: Default + serde::de::DeserializeOwned>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => read_json(p),
        None => Ok(T::default()),
    }
}

fn parse_actor_kind(s: &str) -> Result<ActorKind> {
    match s {
        "tree" => Ok(ActorKind::Tree),
        "mlp" => Ok(ActorKind::Mlp),
        other => Err(Error::InvalidArgument(format!("unknown actor kind '{other}' (tree, mlp)"))),
    }
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" | "validation" => Ok(Split::Validation),
        "test" => Ok(Split::Test),
        other => Err(Error::InvalidArgument(format!("unknown split '{other}' (train, val, test)"))),
    }
}

fn load_env(path: Option<&Path>) -> Result<EnvConfig> {
    let env = match path {
        Some(p) => EnvConfig::load_json(p)?,
        None => EnvConfig::default(),
    };
    for w in env.validation_warnings() {
        eprintln!("warning: {w}");
    }
    Ok(env)
}

fn gen_data(n: usize, out: PathBuf, seed: u64) -> Result<()> {
    let data = generate_dataset(n, seed)?;
    data.save_csv(&out)?;
    println!(
        "wrote {} rows to {} ({} train / {} val / {} test)",
        data.len(),
        out.display(),
        data.indices(Split::Train).len(),
        data.indices(Split::Validation).len(),
        data.indices(Split::Test).len(),
    );
    Ok(())
}

fn split_accuracy<M: softtree_core::supervised::ClassPredictor>(
    model: &M,
    data: &ClassDataset,
    split: Split,
    scaler: &Scaler,
) -> Result<String> {
    if data.indices(split).is_empty() {
        return Ok(format!("{split} -"));
    }
    let acc = evaluate_accuracy(model, data, split, Some(scaler))?;
    Ok(format!("{split} {acc:.4}"))
}

fn train_clf(
    data_path: PathBuf,
    out: PathBuf,
    metrics: Option<PathBuf>,
    cfg: TrainConfig,
) -> Result<()> {
    let data = ClassDataset::load_csv(&data_path)?;
    announce_config(&cfg, &out)?;
    let run = train_classifier(&data, &cfg)?;
    write_json(&out, &run.tree)?;
    if let Some(m) = &metrics {
        save_metrics(&run.metrics, m)?;
    }
    println!(
        "trained depth-{} soft tree ({} internal nodes) in {} iterations; accuracy: {} / {} / {}",
        cfg.depth,
        run.tree.n_internal(),
        cfg.iterations,
        split_accuracy(&run.tree, &data, Split::Train, &run.scaler)?,
        split_accuracy(&run.tree, &data, Split::Validation, &run.scaler)?,
        split_accuracy(&run.tree, &data, Split::Test, &run.scaler)?,
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn eval_clf(model_path: PathBuf, data_path: PathBuf, split: &str) -> Result<()> {
    let split = parse_split(split)?;
    let data = ClassDataset::load_csv(&data_path)?;
    // models are trained on standardized features, so evaluation rebuilds the
    // training-split scaler from the same dataset
    let scaler = Scaler::fit(&data)?;
    let (acc, kind) = match read_tree_model(&model_path)? {
        TreeModel::Soft(t) => (evaluate_accuracy(&t, &data, split, Some(&scaler))?, "soft tree"),
        TreeModel::Oblique(n) => {
            (evaluate_accuracy(&n, &data, split, Some(&scaler))?, "oblique tree")
        }
    };
    println!("{kind} {split} accuracy: {acc:.4}");
    Ok(())
}

fn freeze_cmd(model_path: PathBuf, out: PathBuf) -> Result<()> {
    let tree: SoftTree = read_json(&model_path)?;
    let node = freeze(&tree);
    write_json(&out, &node)?;
    println!(
        "froze depth-{} soft tree into an oblique tree ({} internal nodes, {} leaves); wrote {}",
        tree.depth(),
        node.n_internal(),
        node.n_leaves(),
        out.display(),
    );
    Ok(())
}

fn prune_cmd(model_path: PathBuf, epsilon: f64, out: PathBuf) -> Result<()> {
    let node = match read_tree_model(&model_path)? {
        TreeModel::Oblique(n) => n,
        TreeModel::Soft(t) => freeze(&t),
    };
    let before = (node.n_internal(), node.n_leaves());
    let pruned = prune_all(node, epsilon)?
        .ok_or_else(|| Error::InvalidArgument("tree pruned away entirely".into()))?;
    write_json(&out, &pruned)?;
    println!(
        "pruned {} -> {} internal nodes ({} -> {} leaves); wrote {}",
        before.0,
        pruned.n_internal(),
        before.1,
        pruned.n_leaves(),
        out.display(),
    );
    Ok(())
}

struct TrainRlArgs {
    out: PathBuf,
    critic: Option<PathBuf>,
    curve: Option<PathBuf>,
    env: Option<PathBuf>,
    checkpoint_dir: Option<PathBuf>,
    checkpoint_every: usize,
    cfg: PpoConfig,
    seed: u64,
}

/// The PPO config has no seed field of its own, so the sidecar pairs it with
/// the master seed that fixes every random stream of the run.
#[derive(Serialize)]
struct SeededPpo<'a> {
    seed: u64,
    ppo: &'a PpoConfig,
}

#[derive(Serialize)]
struct SeededGa<'a> {
    seed: u64,
    ga: &'a GaConfig,
}

fn train_rl(args: TrainRlArgs) -> Result<()> {
    let env = load_env(args.env.as_deref())?;
    announce_config(&SeededPpo { seed: args.seed, ppo: &args.cfg }, &args.out)?;

    let mut checkpoint;
    let hook: Option<BatchHook> = match &args.checkpoint_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let every = args.checkpoint_every.max(1);
            let dir = dir.clone();
            checkpoint = move |batch: usize, actor: &Actor, _critic: &Mlp| -> Result<()> {
                if (batch + 1) % every == 0 {
                    write_json(&dir.join(format!("actor_batch_{:04}.json", batch + 1)), actor)?;
                }
                Ok(())
            };
            Some(&mut checkpoint)
        }
        None => None,
    };

    let run = train_ppo_with(&env, &args.cfg, args.seed, hook)?;
    write_json(&args.out, &run.actor)?;
    if let Some(p) = &args.critic {
        write_json(p, &run.critic)?;
    }
    if let Some(p) = &args.curve {
        write_text(p, &curve_to_csv(&run.curve))?;
    }

    let kind = match run.actor.kind() {
        ActorKind::Tree => "tree",
        ActorKind::Mlp => "mlp",
    };
    let last = run.curve.last().map(|p| p.mean_cost).unwrap_or(f64::NAN);
    println!(
        "trained {kind} actor: {} batches x {} episodes, final-batch mean cost {last:.1}; wrote {}",
        args.cfg.total_batches,
        args.cfg.episodes_per_batch,
        args.out.display(),
    );
    Ok(())
}

fn extract_cmd(model_path: PathBuf, epsilon: f64, out: PathBuf) -> Result<()> {
    let value: serde_json::Value = read_json(&model_path)?;
    let tree = match serde_json::from_value::<SoftTree>(value.clone()) {
        Ok(t) => t,
        Err(_) => match serde_json::from_value::<Actor>(value) {
            Ok(Actor::Tree(t)) => t,
            Ok(Actor::Mlp(_)) => {
                return Err(Error::InvalidArgument(
                    "extract-policy needs a soft-tree actor, got an MLP".into(),
                ))
            }
            Err(_) => {
                return Err(Error::InvalidArgument(format!(
                    "{}: not a soft-tree actor file",
                    model_path.display()
                )))
            }
        },
    };
    let policy = extract_policy(&tree, epsilon)?;
    write_json(&out, &policy)?;
    println!(
        "extracted policy: {} internal nodes -> {} after pruning ({} leaves); wrote {}",
        tree.n_internal(),
        policy.n_internal(),
        policy.n_leaves(),
        out.display(),
    );
    Ok(())
}

fn augment_cmd(model_path: PathBuf, rule_path: PathBuf, out: PathBuf) -> Result<()> {
    let node: softtree_core::ObliqueNode = read_json(&model_path)?;
    let rule: AugmentRule = read_json(&rule_path)?;
    let before = node.n_internal();
    let grafted = augment_policy(node, &rule)?;
    write_json(&out, &grafted)?;
    println!(
        "grafted rule (action {}, position '{}'): {} -> {} internal nodes; wrote {}",
        rule.action,
        rule.position,
        before,
        grafted.n_internal(),
        out.display(),
    );
    Ok(())
}

fn eval_policy(
    policy_path: PathBuf,
    episodes: usize,
    env_path: Option<PathBuf>,
    trajectory: Option<PathBuf>,
    seed: u64,
) -> Result<()> {
    let env = load_env(env_path.as_deref())?;
    let loaded = AnyPolicy::load(&policy_path)?;
    let policy = loaded.as_policy();
    let (mean, std, _) = env.evaluate_policy(policy, episodes, seed)?;
    println!("{}: mean LCC {mean:.2} +- {std:.2} over {episodes} episodes", loaded.describe());
    if let Some(path) = &trajectory {
        let mut rng = softtree_core::rng::stream_rng(seed, softtree_core::envsim::EVAL_STREAM_BASE);
        let start = env.reset(&mut rng);
        let (lcc, traj) = env.rollout(policy, start, env.horizon, true, &mut rng)?;
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        softtree_core::envsim::trajectory_to_csv(&traj, f)?;
        println!("wrote {}-step greedy rollout (LCC {lcc:.2}) to {}", env.horizon, path.display());
    }
    Ok(())
}

fn baseline_dp(env_path: Option<PathBuf>, out: PathBuf, tol: f64) -> Result<()> {
    let env = load_env(env_path.as_deref())?;
    let vi = value_iteration(&env, env.discount, tol)?;
    write_json(&out, &vi.policy)?;
    println!(
        "value iteration converged in {} sweeps; actions per condition state: {:?}",
        vi.iterations, vi.policy.actions,
    );
    println!("state values: {:?}", vi.values);
    if vi.policy.actions != REFERENCE_CONDITION_TABLE {
        println!(
            "note: differs from the reference condition table {REFERENCE_CONDITION_TABLE:?} \
             (optimal under the repaired maintenance dynamics)"
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn baseline_ga(
    env_path: Option<PathBuf>,
    out: PathBuf,
    history: Option<PathBuf>,
    cfg: GaConfig,
    seed: u64,
) -> Result<()> {
    let env = load_env(env_path.as_deref())?;
    announce_config(&SeededGa { seed, ga: &cfg }, &out)?;
    let result = ga_optimize(&env, &cfg, seed)?;
    write_json(&out, &result.policy)?;
    if let Some(path) = &history {
        let mut csv = String::from("generation,best_lcc,mean_lcc\n");
        for g in &result.history {
            csv.push_str(&format!("{},{},{}\n", g.generation, g.best_lcc, g.mean_lcc));
        }
        write_text(path, &csv)?;
    }
    let thresholds: Vec<String> =
        result.policy.thresholds().iter().map(|t| format!("{t:.4}")).collect();
    println!(
        "GA best mean LCC {:.2} (fitness episodes {}); thresholds [{}]; wrote {}",
        result.best_lcc,
        cfg.fitness_episodes,
        thresholds.join(", "),
        out.display(),
    );
    Ok(())
}

fn compare(
    policy_paths: Vec<PathBuf>,
    episodes: usize,
    env_path: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: u64,
) -> Result<()> {
    let env = load_env(env_path.as_deref())?;
    let loaded: Vec<(String, AnyPolicy)> = policy_paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(
                || p.display().to_string(),
            );
            AnyPolicy::load(p).map(|pol| (name, pol))
        })
        .collect::<Result<_>>()?;
    let refs: Vec<(&str, &dyn softtree_core::envsim::Policy)> =
        loaded.iter().map(|(n, p)| (n.as_str(), p.as_policy())).collect();
    let report = compare_policies(&env, &refs, episodes, seed)?;
    print!("{}", report.to_text());
    if let Some(path) = &out {
        write_text(path, &report.to_csv())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn fit_dirichlet_cmd(data_path: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let mut rdr = csv::Reader::from_path(&data_path)?;
    let mut samples: Vec<CsVector> = Vec::new();
    for record in rdr.deserialize() {
        let row: Vec<f64> = record?;
        if row.len() != N_CS {
            return Err(Error::Dimension(format!(
                "expected {N_CS} state columns, found {}",
                row.len()
            )));
        }
        let mut s = [0.0; N_CS];
        s.copy_from_slice(&row);
        samples.push(s);
    }
    let theta = softtree_core::envsim::fit_dirichlet(&samples)?;
    println!("fitted Dirichlet parameters from {} samples: {:?}", samples.len(), theta);
    if let Some(path) = &out {
        #[derive(Serialize)]
        struct Theta {
            theta: [f64; N_CS],
        }
        write_json(path, &Theta { theta })?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn export_tree(
    model_path: PathBuf,
    format: &str,
    out: Option<PathBuf>,
    features: Option<Vec<String>>,
    labels: Option<Vec<String>>,
) -> Result<()> {
    let node = match read_tree_model(&model_path)? {
        TreeModel::Oblique(n) => n,
        TreeModel::Soft(t) => freeze(&t),
    };
    let rendered = match format {
        "json" => serde_json::to_string_pretty(&node)? + "\n",
        "dot" => to_dot(&node, features.as_deref(), labels.as_deref()),
        "rule-text" => to_rule_text(&node, features.as_deref(), labels.as_deref()),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown format '{other}' (json, dot, rule-text)"
            )))
        }
    };
    match &out {
        Some(path) => {
            write_text(path, &rendered)?;
            println!("wrote {}", path.display());
        }
        None => print!("{rendered}"),
    }
    Ok(())
}
