//! Hard oblique decision trees: prediction, freezing a soft tree into hard
//! splits, and the pruning pipeline (trivial nodes, infeasible paths via LP
//! feasibility, identical-leaf collapse), plus DOT / rule-text export.
//!
//! Split convention: an internal node (w, b) routes an input left when
//! wᵀx + b ≤ 0 and right otherwise (boundary goes left).

use crate::difftree::{argmax, dot, SoftTree};
use crate::error::{Error, Result};
use crate::simplex::{phase1_feasible, FEAS_TOL};
use serde::{Deserialize, Serialize};

/// Hard oblique tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObliqueNode {
    Internal {
        weights: Vec<f64>,
        bias: f64,
        left: Box<ObliqueNode>,
        right: Box<ObliqueNode>,
    },
    Leaf {
        label: usize,
    },
}

/// Signed constraint rows A x ≤ d accumulated along a decision path.
#[derive(Debug, Clone, Default)]
pub struct PathConstraints {
    a: Vec<Vec<f64>>,
    d: Vec<f64>,
}

impl PathConstraints {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: Vec<f64>, bound: f64) {
        self.a.push(row);
        self.d.push(bound);
    }

    pub fn pop(&mut self) {
        self.a.pop();
        self.d.pop();
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn rows(&self) -> (&[Vec<f64>], &[f64]) {
        (&self.a, &self.d)
    }
}

/// True iff {x : A x ≤ d} is non-empty (phase-1 simplex, tolerance 1e−9).
pub fn lp_feasible(constraints: &PathConstraints) -> Result<bool> {
    phase1_feasible(&constraints.a, &constraints.d, FEASIBILITY_TOL)
}

/// Tolerance used for LP feasibility decisions.
pub const FEASIBILITY_TOL: f64 = FEAS_TOL;

impl ObliqueNode {
    pub fn leaf(label: usize) -> Self {
        ObliqueNode::Leaf { label }
    }

    pub fn internal(weights: Vec<f64>, bias: f64, left: ObliqueNode, right: ObliqueNode) -> Self {
        ObliqueNode::Internal { weights, bias, left: Box::new(left), right: Box::new(right) }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ObliqueNode::Leaf { .. })
    }

    /// Number of internal (split) nodes.
    pub fn n_internal(&self) -> usize {
        match self {
            ObliqueNode::Leaf { .. } => 0,
            ObliqueNode::Internal { left, right, .. } => 1 + left.n_internal() + right.n_internal(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            ObliqueNode::Leaf { .. } => 1,
            ObliqueNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Node count including leaves.
    pub fn n_nodes(&self) -> usize {
        self.n_internal() + self.n_leaves()
    }

    pub fn depth(&self) -> usize {
        match self {
            ObliqueNode::Leaf { .. } => 1,
            ObliqueNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Class label for `x`: descends left on wᵀx + b ≤ 0, right otherwise.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let mut node = self;
        loop {
            match node {
                ObliqueNode::Leaf { label } => return Ok(*label),
                ObliqueNode::Internal { weights, bias, left, right } => {
                    if weights.len() != x.len() {
                        return Err(Error::Dimension(format!(
                            "input has {} features, split expects {}",
                            x.len(),
                            weights.len()
                        )));
                    }
                    node = if dot(weights, x) + bias <= 0.0 { left } else { right };
                }
            }
        }
    }

    /// Largest label anywhere in the tree (for validating label ranges).
    pub fn max_label(&self) -> usize {
        match self {
            ObliqueNode::Leaf { label } => *label,
            ObliqueNode::Internal { left, right, .. } => left.max_label().max(right.max_label()),
        }
    }
}

/// Structure-preserving hard conversion of a soft tree: identical splits,
/// leaf labels by logit argmax (ties toward the lowest class index).
pub fn freeze(tree: &SoftTree) -> ObliqueNode {
    fn build(tree: &SoftTree, idx: usize, ni: usize) -> ObliqueNode {
        if idx >= ni {
            ObliqueNode::Leaf { label: argmax(tree.leaf_row(idx - ni)) }
        } else {
            ObliqueNode::Internal {
                weights: tree.weight_row(idx).to_vec(),
                bias: tree.biases[idx],
                left: Box::new(build(tree, 2 * idx + 1, ni)),
                right: Box::new(build(tree, 2 * idx + 2, ni)),
            }
        }
    }
    build(tree, 0, tree.n_internal())
}

/// Bottom-up trivial-node pruning: weights with |w_i| ≤ ε·max(|b|, 1) are
/// zeroed; a node with all-zero weights is replaced by the child selected by
/// its bias sign (b ≤ 0 → left).
pub fn prune_trivial(node: ObliqueNode, epsilon: f64) -> ObliqueNode {
    assert!(epsilon >= 0.0, "epsilon must be non-negative");
    match node {
        ObliqueNode::Leaf { .. } => node,
        ObliqueNode::Internal { mut weights, bias, left, right } => {
            let left = prune_trivial(*left, epsilon);
            let right = prune_trivial(*right, epsilon);
            let threshold = epsilon * bias.abs().max(1.0);
            for w in weights.iter_mut() {
                if w.abs() <= threshold {
                    *w = 0.0;
                }
            }
            if weights.iter().all(|w| *w == 0.0) {
                if bias <= 0.0 {
                    left
                } else {
                    right
                }
            } else {
                ObliqueNode::internal(weights, bias, left, right)
            }
        }
    }
}

/// Top-down infeasible-path pruning with margin 0 (right-branch strict
/// inequalities relaxed to closed ones).
pub fn prune_infeasible(node: ObliqueNode) -> Result<Option<ObliqueNode>> {
    prune_infeasible_with_margin(node, 0.0)
}

/// Top-down infeasible-path pruning. Taking the left branch at (w, b) adds
/// the row wᵀx ≤ −b; the right branch adds −wᵀx ≤ b − τ. Subtrees whose
/// accumulated constraint set is infeasible are removed; nodes losing one
/// child are bypassed, nodes losing both are removed.
pub fn prune_infeasible_with_margin(node: ObliqueNode, tau: f64) -> Result<Option<ObliqueNode>> {
    fn rec(node: ObliqueNode, cons: &mut PathConstraints, tau: f64) -> Result<Option<ObliqueNode>> {
        match node {
            ObliqueNode::Leaf { .. } => Ok(Some(node)),
            ObliqueNode::Internal { weights, bias, left, right } => {
                cons.push(weights.clone(), -bias);
                let l = if lp_feasible(cons)? { rec(*left, cons, tau)? } else { None };
                cons.pop();
                cons.push(weights.iter().map(|w| -w).collect(), bias - tau);
                let r = if lp_feasible(cons)? { rec(*right, cons, tau)? } else { None };
                cons.pop();
                Ok(match (l, r) {
                    (None, None) => None,
                    (Some(child), None) | (None, Some(child)) => Some(child),
                    (Some(l), Some(r)) => Some(ObliqueNode::internal(weights, bias, l, r)),
                })
            }
        }
    }
    let mut cons = PathConstraints::new();
    rec(node, &mut cons, tau)
}

/// Bottom-up collapse of internal nodes whose children are identically
/// labeled leaves; one pass reaches the fixed point.
pub fn collapse_leaves(node: ObliqueNode) -> ObliqueNode {
    match node {
        ObliqueNode::Leaf { .. } => node,
        ObliqueNode::Internal { weights, bias, left, right } => {
            let left = collapse_leaves(*left);
            let right = collapse_leaves(*right);
            if let (ObliqueNode::Leaf { label: a }, ObliqueNode::Leaf { label: b }) = (&left, &right) {
                if a == b {
                    return ObliqueNode::Leaf { label: *a };
                }
            }
            ObliqueNode::internal(weights, bias, left, right)
        }
    }
}

/// Full pipeline: trivial nodes, then infeasible paths, then leaf collapse.
pub fn prune_all(node: ObliqueNode, epsilon: f64) -> Result<Option<ObliqueNode>> {
    let node = prune_trivial(node, epsilon);
    Ok(prune_infeasible(node)?.map(collapse_leaves))
}

/// Grafts the rule "wᵀx + b > 0 → `action`" above the subtree at `path`
/// (sequence of 'L'/'R' steps from the root; empty = whole tree). The
/// original subtree remains on the non-firing branch.
pub fn graft_rule(
    root: ObliqueNode,
    weights: Vec<f64>,
    bias: f64,
    action: usize,
    path: &str,
) -> Result<ObliqueNode> {
    if !weights.iter().chain(std::iter::once(&bias)).all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("rule weights/bias must be finite".into()));
    }
    fn rec(
        node: ObliqueNode,
        weights: &[f64],
        bias: f64,
        action: usize,
        path: &[u8],
    ) -> Result<ObliqueNode> {
        if let Some((&step, rest)) = path.split_first() {
            match node {
                ObliqueNode::Leaf { .. } => Err(Error::InvalidArgument("graft path descends past a leaf".into())),
                ObliqueNode::Internal { weights: w, bias: b, left, right } => match step {
                    b'L' | b'l' => Ok(ObliqueNode::internal(
                        w,
                        b,
                        rec(*left, weights, bias, action, rest)?,
                        *right,
                    )),
                    b'R' | b'r' => Ok(ObliqueNode::internal(
                        w,
                        b,
                        *left,
                        rec(*right, weights, bias, action, rest)?,
                    )),
                    c => Err(Error::InvalidArgument(format!("graft path step '{}' (want L or R)", c as char))),
                },
            }
        } else {
            if let ObliqueNode::Internal { weights: w, .. } = &node {
                if w.len() != weights.len() {
                    return Err(Error::Dimension(format!(
                        "rule has {} weights, tree splits on {}",
                        weights.len(),
                        w.len()
                    )));
                }
            }
            Ok(ObliqueNode::internal(
                weights.to_vec(),
                bias,
                node,
                ObliqueNode::leaf(action),
            ))
        }
    }
    rec(root, &weights, bias, action, path.as_bytes())
}

/// Rewrites splits learned on standardized features x' = (x − μ)/σ into raw
/// coordinates: w'_i = w_i/σ_i, b' = b − Σ w_i μ_i/σ_i.
pub fn unscale(node: &ObliqueNode, mean: &[f64], std: &[f64]) -> ObliqueNode {
    match node {
        ObliqueNode::Leaf { label } => ObliqueNode::Leaf { label: *label },
        ObliqueNode::Internal { weights, bias, left, right } => {
            let w: Vec<f64> = weights.iter().zip(std).map(|(w, s)| w / s).collect();
            let shift: f64 = weights.iter().zip(mean).zip(std).map(|((w, m), s)| w * m / s).sum();
            ObliqueNode::internal(w, bias - shift, unscale(left, mean, std), unscale(right, mean, std))
        }
    }
}

fn format_linear(weights: &[f64], bias: f64, feature_names: Option<&[String]>) -> String {
    let mut s = String::new();
    let mut any = false;
    for (i, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let name = feature_names
            .and_then(|n| n.get(i).cloned())
            .unwrap_or_else(|| format!("x{}", i + 1));
        if any {
            s.push_str(if *w < 0.0 { " - " } else { " + " });
            s.push_str(&format!("{:.4}·{}", w.abs(), name));
        } else {
            s.push_str(&format!("{:.4}·{}", w, name));
            any = true;
        }
    }
    if !any {
        s.push('0');
    }
    if bias != 0.0 || !any {
        s.push_str(if bias < 0.0 { " - " } else { " + " });
        s.push_str(&format!("{:.4}", bias.abs()));
    }
    s
}

fn class_name(label: usize, class_names: Option<&[String]>) -> String {
    class_names
        .and_then(|n| n.get(label).cloned())
        .unwrap_or_else(|| format!("class {label}"))
}

/// GraphViz DOT rendering; internal nodes show the split inequality, leaves
/// the class/action name, left edges are the "≤ 0" branch.
pub fn to_dot(node: &ObliqueNode, feature_names: Option<&[String]>, class_names: Option<&[String]>) -> String {
    fn rec(
        node: &ObliqueNode,
        id: &mut usize,
        out: &mut String,
        feature_names: Option<&[String]>,
        class_names: Option<&[String]>,
    ) -> usize {
        let my = *id;
        *id += 1;
        match node {
            ObliqueNode::Leaf { label } => {
                out.push_str(&format!(
                    "  n{} [shape=box, style=rounded, label=\"{}\"];\n",
                    my,
                    class_name(*label, class_names)
                ));
            }
            ObliqueNode::Internal { weights, bias, left, right } => {
                out.push_str(&format!(
                    "  n{} [shape=ellipse, label=\"{} ≤ 0\"];\n",
                    my,
                    format_linear(weights, *bias, feature_names)
                ));
                let l = rec(left, id, out, feature_names, class_names);
                let r = rec(right, id, out, feature_names, class_names);
                out.push_str(&format!("  n{my} -> n{l} [label=\"yes\"];\n"));
                out.push_str(&format!("  n{my} -> n{r} [label=\"no\"];\n"));
            }
        }
        my
    }
    let mut out = String::from("digraph oblique_tree {\n");
    let mut id = 0;
    rec(node, &mut id, &mut out, feature_names, class_names);
    out.push_str("}\n");
    out
}

/// Nested case-rule rendering; a bare leaf prints one constant line.
pub fn to_rule_text(
    node: &ObliqueNode,
    feature_names: Option<&[String]>,
    class_names: Option<&[String]>,
) -> String {
    fn rec(
        node: &ObliqueNode,
        indent: usize,
        out: &mut String,
        feature_names: Option<&[String]>,
        class_names: Option<&[String]>,
    ) {
        let pad = "    ".repeat(indent);
        match node {
            ObliqueNode::Leaf { label } => {
                out.push_str(&format!("{pad}{}\n", class_name(*label, class_names)));
            }
            ObliqueNode::Internal { weights, bias, left, right } => {
                out.push_str(&format!(
                    "{pad}if {} ≤ 0:\n",
                    format_linear(weights, *bias, feature_names)
                ));
                rec(left, indent + 1, out, feature_names, class_names);
                out.push_str(&format!("{pad}else:\n"));
                rec(right, indent + 1, out, feature_names, class_names);
            }
        }
    }
    let mut out = String::new();
    rec(node, 0, &mut out, feature_names, class_names);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn two_leaf(w: Vec<f64>, b: f64, l: usize, r: usize) -> ObliqueNode {
        ObliqueNode::internal(w, b, ObliqueNode::leaf(l), ObliqueNode::leaf(r))
    }

    #[test]
    fn predict_follows_sign_convention() {
        let t = two_leaf(vec![1.0, 0.0], -0.5, 0, 1);
        assert_eq!(t.predict(&[0.2, 0.9]).unwrap(), 0); // 0.2 − 0.5 ≤ 0
        assert_eq!(t.predict(&[0.9, 0.0]).unwrap(), 1); // 0.9 − 0.5 > 0
        assert_eq!(t.predict(&[0.5, 123.0]).unwrap(), 0); // boundary goes left
        assert!(t.predict(&[1.0]).is_err());
    }

    #[test]
    fn freeze_takes_leaf_argmax_and_preserves_shape() {
        let mut rng = stream_rng(3, 0);
        let mut soft = SoftTree::new(2, 3, 3, &mut rng);
        soft.leaf_logits = vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0];
        let hard = freeze(&soft);
        match &hard {
            ObliqueNode::Internal { left, right, weights, bias } => {
                assert_eq!(weights.as_slice(), soft.weight_row(0));
                assert_eq!(*bias, soft.biases[0]);
                assert_eq!(**left, ObliqueNode::leaf(0));
                assert_eq!(**right, ObliqueNode::leaf(1));
            }
            _ => panic!("expected internal root"),
        }
        assert_eq!(hard.n_internal(), soft.n_internal());

        // tie → lowest class index
        let mut tied = SoftTree::new(1, 2, 3, &mut rng);
        tied.leaf_logits = vec![0.7, 0.7, 0.1];
        assert_eq!(freeze(&tied), ObliqueNode::leaf(0));
    }

    #[test]
    fn frozen_agrees_with_annealed_soft_argmax() {
        let mut rng = stream_rng(4, 0);
        let mut soft = SoftTree::new(4, 3, 4, &mut rng);
        for l in soft.leaf_logits.iter_mut() {
            *l = rng.gen_range(-2.0..2.0);
        }
        soft.temperature = 0.001;
        let hard = freeze(&soft);
        let mut agree = 0;
        let n = 2000;
        for _ in 0..n {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let s = soft.predict(&x).unwrap();
            let h = hard.predict(&x).unwrap();
            if s == h {
                agree += 1;
            }
        }
        assert!(agree as f64 / n as f64 >= 0.99, "agreement {}/{n}", agree);
    }

    #[test]
    fn trivial_pruning_examples() {
        // all weights below threshold, b < 0 → left child promoted
        let t = two_leaf(vec![1e-6, 0.0], -1.0, 7, 8);
        assert_eq!(prune_trivial(t, 1e-4), ObliqueNode::leaf(7));
        // weights above threshold → unchanged
        let t = two_leaf(vec![0.5, -0.2], 1.0, 1, 2);
        assert_eq!(prune_trivial(t.clone(), 1e-4), t);
        // ε = 0 with exactly-zero weights, b = 0 → boundary convention: left
        let t = two_leaf(vec![0.0, 0.0], 0.0, 3, 4);
        assert_eq!(prune_trivial(t, 0.0), ObliqueNode::leaf(3));
        // b > 0 → right child promoted
        let t = two_leaf(vec![0.0, 0.0], 0.25, 3, 4);
        assert_eq!(prune_trivial(t, 0.0), ObliqueNode::leaf(4));
    }

    #[test]
    fn trivial_threshold_is_relative_to_bias() {
        // |w| = 0.3 ≤ ε·|b| = 0.4 → pruned toward right (b > 0)
        let t = two_leaf(vec![0.3], 4.0, 0, 1);
        assert_eq!(prune_trivial(t, 0.1), ObliqueNode::leaf(1));
        // same ε with unit bias guard: |w| = 0.3 > 0.1·max(0.5, 1) → kept
        let t = two_leaf(vec![0.3], 0.5, 0, 1);
        assert_eq!(prune_trivial(t.clone(), 0.1), t);
    }

    #[test]
    fn lp_feasible_on_path_constraints() {
        let mut c = PathConstraints::new();
        assert!(lp_feasible(&c).unwrap());
        c.push(vec![1.0], 0.0);
        c.push(vec![-1.0], -5.0);
        assert!(!lp_feasible(&c).unwrap());
        c.pop();
        assert!(lp_feasible(&c).unwrap());
    }

    #[test]
    fn infeasible_path_pruning_keeps_consistent_tree() {
        // root (w=[1,1], b=−5); left child (w=[1,1], b=0): both of its branches
        // are compatible with the path constraint x₁+x₂ ≤ 5 → unchanged
        let inner = two_leaf(vec![1.0, 1.0], 0.0, 0, 1);
        let t = ObliqueNode::internal(vec![1.0, 1.0], -5.0, inner, ObliqueNode::leaf(2));
        let pruned = prune_infeasible(t.clone()).unwrap().unwrap();
        assert_eq!(pruned, t);
    }

    #[test]
    fn infeasible_path_pruning_removes_unreachable_branch() {
        // root (w=[1,1], b=−5): the right path requires x₁+x₂ > 5; a nested
        // node (w=[1,1], b=0) whose left branch needs x₁+x₂ ≤ 0 is unreachable
        let inner = two_leaf(vec![1.0, 1.0], 0.0, 0, 1);
        let t = ObliqueNode::internal(vec![1.0, 1.0], -5.0, ObliqueNode::leaf(2), inner);
        let pruned = prune_infeasible(t).unwrap().unwrap();
        let want = ObliqueNode::internal(vec![1.0, 1.0], -5.0, ObliqueNode::leaf(2), ObliqueNode::leaf(1));
        assert_eq!(pruned, want);
    }

    #[test]
    fn collapse_merges_identical_leaf_siblings() {
        let t = two_leaf(vec![1.0], 0.0, 2, 2);
        assert_eq!(collapse_leaves(t), ObliqueNode::leaf(2));
        let t = two_leaf(vec![1.0], 0.0, 1, 3);
        assert_eq!(collapse_leaves(t.clone()), t);
        // two-level cascade collapses fully
        let lower = two_leaf(vec![1.0, 0.0], 0.3, 5, 5);
        let mid = ObliqueNode::internal(vec![0.0, 1.0], -0.2, lower, ObliqueNode::leaf(5));
        let top = ObliqueNode::internal(vec![1.0, 1.0], 0.0, mid, ObliqueNode::leaf(5));
        assert_eq!(collapse_leaves(top), ObliqueNode::leaf(5));
    }

    #[test]
    fn prune_all_runs_stages_in_order() {
        // the trivial split promotes leaf 4; the surviving root then has two
        // identically labeled leaves, which only the final collapse removes
        let trivial = two_leaf(vec![0.0, 1e-9], -2.0, 4, 1);
        let t = ObliqueNode::internal(vec![1.0, 0.0], 0.0, trivial, ObliqueNode::leaf(4));
        let pruned = prune_all(t, 1e-4).unwrap().unwrap();
        assert_eq!(pruned, ObliqueNode::leaf(4));
    }

    fn random_hard_tree(depth: usize, f: usize, n_classes: usize, seed: u64) -> ObliqueNode {
        fn build<R: Rng>(level: usize, f: usize, c: usize, rng: &mut R) -> ObliqueNode {
            if level == 0 {
                ObliqueNode::leaf(rng.gen_range(0..c))
            } else {
                ObliqueNode::internal(
                    (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    rng.gen_range(-1.0..1.0),
                    build(level - 1, f, c, rng),
                    build(level - 1, f, c, rng),
                )
            }
        }
        let mut rng = stream_rng(seed, 40);
        build(depth, f, n_classes, &mut rng)
    }

    #[test]
    fn exact_stages_preserve_predictions() {
        let mut rng = stream_rng(11, 0);
        for seed in 0..10 {
            let t = random_hard_tree(4, 2, 3, seed);
            let pi = prune_infeasible(t.clone()).unwrap().unwrap();
            let pc = collapse_leaves(t.clone());
            for _ in 0..1000 {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let want = t.predict(&x).unwrap();
                assert_eq!(pi.predict(&x).unwrap(), want, "infeasible-path pruning changed a prediction");
                assert_eq!(pc.predict(&x).unwrap(), want, "leaf collapse changed a prediction");
            }
            assert!(pi.n_nodes() <= t.n_nodes());
            assert!(pc.n_nodes() <= t.n_nodes());
        }
    }

    #[test]
    fn trivial_pruning_with_zero_epsilon_preserves_predictions() {
        let mut rng = stream_rng(13, 0);
        for seed in 0..10 {
            let mut t = random_hard_tree(3, 2, 3, 100 + seed);
            // zero out one node's weights by hand
            if let ObliqueNode::Internal { left, .. } = &mut t {
                if let ObliqueNode::Internal { weights, .. } = left.as_mut() {
                    weights.iter_mut().for_each(|w| *w = 0.0);
                }
            }
            let p = prune_trivial(t.clone(), 0.0);
            for _ in 0..1000 {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
                assert_eq!(p.predict(&x).unwrap(), t.predict(&x).unwrap());
            }
        }
    }

    #[test]
    fn graft_rule_routes_firing_branch_to_action() {
        let base = two_leaf(vec![1.0, 0.0, 0.0, 0.0], 0.0, 1, 2);
        // s₄ > 0.10 → action 3
        let g = graft_rule(base.clone(), vec![0.0, 0.0, 0.0, 1.0], -0.10, 3, "").unwrap();
        assert_eq!(g.predict(&[0.0, 0.0, 0.0, 0.5]).unwrap(), 3);
        assert_eq!(g.predict(&[-1.0, 0.0, 0.0, 0.05]).unwrap(), 1);
        assert_eq!(g.n_internal(), 2);
        // malformed rule dimension
        assert!(graft_rule(base.clone(), vec![1.0], 0.0, 3, "").is_err());
        // graft below the root's left branch
        let g2 = graft_rule(base, vec![0.0, 0.0, 0.0, 1.0], -0.10, 3, "L").unwrap();
        assert_eq!(g2.predict(&[-1.0, 0.0, 0.0, 0.5]).unwrap(), 3);
        assert_eq!(g2.predict(&[1.0, 0.0, 0.0, 0.5]).unwrap(), 2);
    }

    #[test]
    fn never_firing_rule_is_pruned_away() {
        let base = two_leaf(vec![1.0, 1.0], -5.0, 0, 1);
        // grafted condition 0·x − 1 > 0 never holds, so pruning recovers the base tree
        let g = graft_rule(base.clone(), vec![0.0, 0.0], -1.0, 4, "").unwrap();
        let pruned = prune_all(g, 1e-8).unwrap().unwrap();
        assert_eq!(pruned, base);
    }

    #[test]
    fn unscale_matches_standardized_predictions() {
        let mean = [1.5, -2.0];
        let std = [2.0, 0.5];
        let t = random_hard_tree(3, 2, 3, 77);
        let u = unscale(&t, &mean, &std);
        let mut rng = stream_rng(21, 0);
        for _ in 0..500 {
            let raw: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let scaled: Vec<f64> = raw.iter().zip(&mean).zip(&std).map(|((x, m), s)| (x - m) / s).collect();
            assert_eq!(u.predict(&raw).unwrap(), t.predict(&scaled).unwrap());
        }
    }

    #[test]
    fn dot_and_rule_text_render() {
        let t = two_leaf(vec![5.72, -0.663, 0.0, 0.0], -3.88, 2, 1);
        let names: Vec<String> = (1..=4).map(|i| format!("s{i}")).collect();
        let classes: Vec<String> =
            ["do nothing", "maintenance", "repair", "rehabilitation", "replacement"].iter().map(|s| s.to_string()).collect();
        let dot = to_dot(&t, Some(&names), Some(&classes));
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("5.7200·s1"));
        assert!(dot.contains("repair"));
        assert!(dot.contains("maintenance"));
        let rules = to_rule_text(&t, Some(&names), Some(&classes));
        assert_eq!(rules.lines().count(), 4); // if/then/else/then for one split
        assert!(rules.contains("≤ 0"));
        // constant tree → one line
        let single = to_rule_text(&ObliqueNode::leaf(1), None, Some(&classes));
        assert_eq!(single.trim(), "maintenance");
        assert_eq!(single.lines().count(), 1);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let t = random_hard_tree(4, 3, 5, 99);
        let s = serde_json::to_string(&t).unwrap();
        let back: ObliqueNode = serde_json::from_str(&s).unwrap();
        assert_eq!(t, back);
    }
}
