//! File helpers and model-file sniffing shared by the subcommands.

use serde::de::DeserializeOwned;
use serde::Serialize;
use softtree_core::baselines::{ConditionPolicy, ReliabilityPolicy};
use softtree_core::envsim::Policy;
use softtree_core::rl::Actor;
use softtree_core::{Error, ObliqueNode, Result, SoftTree};
use std::path::{Path, PathBuf};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    Ok(std::fs::write(path, text)?)
}

/// `<out>.config.json`, next to the artifact it reproduces.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".config.json");
    PathBuf::from(name)
}

/// Logs the fully resolved config to stderr (one JSON line) and writes it as
/// a sidecar next to the output artifact, so every run is reproducible from
/// its files alone.
pub fn announce_config<T: Serialize>(config: &T, out: &Path) -> Result<()> {
    eprintln!("config: {}", serde_json::to_string(config)?);
    write_json(&sidecar_path(out), config)
}

/// A tree model read from disk: hard oblique trees are tagged with a `kind`
/// field, soft trees are not.
pub enum TreeModel {
    Soft(SoftTree),
    Oblique(ObliqueNode),
}

pub fn read_tree_model(path: &Path) -> Result<TreeModel> {
    let value: serde_json::Value = read_json(path)?;
    if let Ok(node) = serde_json::from_value::<ObliqueNode>(value.clone()) {
        return Ok(TreeModel::Oblique(node));
    }
    if let Ok(tree) = serde_json::from_value::<SoftTree>(value) {
        return Ok(TreeModel::Soft(tree));
    }
    Err(Error::InvalidArgument(format!(
        "{}: not a soft-tree or oblique-tree model file",
        path.display()
    )))
}

/// Any of the four policy file formats, sniffed by shape: oblique trees carry
/// a `kind` tag, actors are soft-tree/MLP parameter sets, condition policies
/// are `{"actions": [...]}`, reliability policies carry thresholds.
pub enum AnyPolicy {
    Oblique(ObliqueNode),
    Actor(Actor),
    Condition(ConditionPolicy),
    Reliability(ReliabilityPolicy),
}

impl AnyPolicy {
    pub fn load(path: &Path) -> Result<Self> {
        let value: serde_json::Value = read_json(path)?;
        if let Ok(node) = serde_json::from_value::<ObliqueNode>(value.clone()) {
            return Ok(AnyPolicy::Oblique(node));
        }
        if let Ok(actor) = serde_json::from_value::<Actor>(value.clone()) {
            return Ok(AnyPolicy::Actor(actor));
        }
        if let Ok(cond) = serde_json::from_value::<ConditionPolicy>(value.clone()) {
            return Ok(AnyPolicy::Condition(cond));
        }
        if let Ok(rel) = serde_json::from_value::<ReliabilityPolicy>(value) {
            return Ok(AnyPolicy::Reliability(rel));
        }
        Err(Error::InvalidArgument(format!(
            "{}: not a recognized policy file (oblique tree, actor, condition \
             table, or reliability thresholds)",
            path.display()
        )))
    }

    pub fn as_policy(&self) -> &dyn Policy {
        match self {
            AnyPolicy::Oblique(p) => p,
            AnyPolicy::Actor(p) => p,
            AnyPolicy::Condition(p) => p,
            AnyPolicy::Reliability(p) => p,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            AnyPolicy::Oblique(p) => {
                format!("oblique tree ({} internal nodes, {} leaves)", p.n_internal(), p.n_leaves())
            }
            AnyPolicy::Actor(Actor::Tree(t)) => format!("soft-tree actor (depth {})", t.depth()),
            AnyPolicy::Actor(Actor::Mlp(m)) => format!("MLP actor ({} parameters)", m.n_params()),
            AnyPolicy::Condition(p) => format!("condition table {:?}", p.actions),
            AnyPolicy::Reliability(p) => format!("reliability thresholds {:?}", p.thresholds()),
        }
    }
}
