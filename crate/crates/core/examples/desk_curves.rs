//! Prints desk-scale PPO learning curves for a few seeds (tree and MLP
//! actors) to judge seed-to-seed variation.

use softtree_core::envsim::EnvConfig;
use softtree_core::rl::{train_ppo, ActorKind, PpoConfig};

fn main() {
    let env = EnvConfig::default();
    for kind in [ActorKind::Tree, ActorKind::Mlp] {
        for seed in [1u64, 2, 3] {
            let cfg = PpoConfig { actor: kind, ..PpoConfig::default().desk_scale() };
            let run = train_ppo(&env, &cfg, seed).expect("training");
            let curve: Vec<i64> = run.curve.iter().map(|p| p.mean_cost as i64).collect();
            let (mean, _, _) = env.evaluate_policy(&run.actor, 500, 424_242).unwrap();
            println!("{kind:?} seed {seed}: final eval {mean:.0}");
            println!("  curve {curve:?}");
            let ent: Vec<f64> = run.losses.iter().map(|l| (l.entropy * 100.0).round() / 100.0).collect();
            println!("  entropy {ent:?}");
        }
    }
}
