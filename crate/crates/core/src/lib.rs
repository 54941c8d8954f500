//! Differentiable soft decision trees with temperature annealing, extraction of
//! compact oblique decision trees, and policy optimization (PPO, value iteration,
//! genetic search) on a bridge-element deterioration model.
//!
//! The crate is organized around a few independent layers:
//!
//! * [`difftree`] — the soft (differentiable) tree model: forward pass, exact
//!   reverse-mode gradients, temperature annealing, L1 penalty.
//! * [`nn`] — a small dense network (ELU hidden layers) and the Adam optimizer,
//!   used as the PPO critic and as an alternative actor.
//! * [`oblique`] — hard oblique trees: prediction, freezing a soft tree, and the
//!   pruning pipeline (trivial nodes, infeasible paths via LP, leaf collapse).
//! * [`envsim`] — the deterioration environment: Markov condition-state dynamics,
//!   failure risk, life-cycle cost, Dirichlet initial-state model.
//! * [`supervised`] — synthetic four-class benchmark and classifier training.
//! * [`rl`] — PPO training of tree/MLP actors and policy extraction.
//! * [`baselines`] — value-iteration and genetic-algorithm reference policies.

pub mod baselines;
pub mod difftree;
pub mod envsim;
pub mod error;
pub mod nn;
pub mod oblique;
pub mod rl;
pub mod rng;
pub mod simplex;
pub mod special;
pub mod supervised;

pub use difftree::{AnnealSchedule, SoftTree, TreeGrads};
pub use envsim::EnvConfig;
pub use error::{Error, Result};
pub use nn::{Adam, Mlp};
pub use oblique::{ObliqueNode, PathConstraints};
pub use rl::PpoConfig;
pub use supervised::{ClassDataset, TrainConfig};
