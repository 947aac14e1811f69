//! CART regression trees.
//!
//! Greedy binary splitting by maximum variance reduction (equivalently,
//! minimum weighted child SSE). Thresholds are midpoints of consecutive
//! distinct sorted feature values; rows with value <= threshold go left.
//! Ties between candidate splits break toward the lower feature index, then
//! the lower threshold. Leaves predict the mean target of their rows.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stopping rules shared by the standalone tree and the ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` means unlimited depth.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::InvalidHyperparameter(
                "min_samples_split must be >= 2".into(),
            ));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::InvalidHyperparameter(
                "min_samples_leaf must be >= 1".into(),
            ));
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidHyperparameter(
                "max_depth must be >= 1 (or unlimited)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
}

/// A fitted regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if row[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Optional per-split feature subsampling (used by random forests).
pub(crate) struct FeatureSampler<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub mtry: usize,
}

pub(crate) struct GrowContext<'a> {
    /// Feature columns, each of full dataset length.
    pub columns: &'a [Vec<f64>],
    /// Targets, full dataset length.
    pub targets: &'a [f64],
    pub params: &'a TreeParams,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
    split_pos: usize,
}

/// Mean and SSE of a node's targets. Values are summed in sorted order so
/// the result is exactly invariant to training-row permutation.
fn node_sse(targets: &[f64], idx: &[u32]) -> (f64, f64) {
    let mut ys: Vec<f64> = idx.iter().map(|&i| targets[i as usize]).collect();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = ys.len() as f64;
    let sum: f64 = ys.iter().sum();
    let mean = sum / n;
    let sse: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
    (mean, sse)
}

/// Split-selection tolerance: score differences below this are ties, broken
/// by (feature index, threshold). Masks summation-order noise so identical
/// partitions reached through different features compare equal.
fn tie_eps(parent_sse: f64) -> f64 {
    1e-10 * (parent_sse.abs() + 1.0)
}

/// Scans one feature for the best split of `idx` (which must already be
/// sorted by that feature). Returns `(threshold, child SSE sum, pos)`.
fn scan_feature(
    column: &[f64],
    targets: &[f64],
    sorted_idx: &[u32],
    min_leaf: usize,
    eps: f64,
) -> Option<(f64, f64, usize)> {
    let n = sorted_idx.len();
    let total_sum: f64 = sorted_idx.iter().map(|&i| targets[i as usize]).sum();
    let total_sumsq: f64 = sorted_idx
        .iter()
        .map(|&i| targets[i as usize] * targets[i as usize])
        .sum();

    let mut best: Option<(f64, f64, usize)> = None;
    let mut left_sum = 0.0;
    let mut left_sumsq = 0.0;
    for pos in 1..n {
        let prev = sorted_idx[pos - 1] as usize;
        let y_prev = targets[prev];
        left_sum += y_prev;
        left_sumsq += y_prev * y_prev;

        let v_prev = column[prev];
        let v_next = column[sorted_idx[pos] as usize];
        if v_prev == v_next {
            continue;
        }
        if pos < min_leaf || n - pos < min_leaf {
            continue;
        }

        let nl = pos as f64;
        let nr = (n - pos) as f64;
        let right_sum = total_sum - left_sum;
        let right_sumsq = total_sumsq - left_sumsq;
        let sse = (left_sumsq - left_sum * left_sum / nl) + (right_sumsq - right_sum * right_sum / nr);

        if best.is_none_or(|(_, s, _)| sse < s - eps) {
            // Midpoint, guarded so the threshold routes v_prev left and
            // v_next right even when rounding lands on v_next.
            let mid = (v_prev + v_next) / 2.0;
            let threshold = if mid < v_next { mid } else { v_prev };
            best = Some((threshold, sse, pos));
        }
    }
    best
}

fn grow_node(
    ctx: &GrowContext<'_>,
    idx: &mut Vec<u32>,
    depth: usize,
    sampler: &mut Option<FeatureSampler<'_>>,
    nodes: &mut Vec<TreeNode>,
) -> u32 {
    let (mean, sse) = node_sse(ctx.targets, idx);
    let at_depth_limit = ctx.params.max_depth.is_some_and(|d| depth >= d);
    if idx.len() < ctx.params.min_samples_split || at_depth_limit || sse <= 0.0 {
        nodes.push(TreeNode::Leaf { value: mean });
        return (nodes.len() - 1) as u32;
    }

    let p = ctx.columns.len();
    let candidate_features: Vec<usize> = match sampler {
        Some(s) if s.mtry < p => {
            let mut chosen: Vec<usize> = (0..p).collect();
            // Partial Fisher-Yates, then sorted so tie-breaks stay by index.
            for i in 0..s.mtry {
                let j = s.rng.random_range(i..p);
                chosen.swap(i, j);
            }
            chosen.truncate(s.mtry);
            chosen.sort_unstable();
            chosen
        }
        _ => (0..p).collect(),
    };

    let eps = tie_eps(sse);
    let mut best: Option<BestSplit> = None;
    let mut scratch: Vec<u32> = Vec::with_capacity(idx.len());
    for &feature in &candidate_features {
        let column = &ctx.columns[feature];
        scratch.clear();
        scratch.extend_from_slice(idx);
        scratch.sort_by(|&a, &b| {
            column[a as usize]
                .partial_cmp(&column[b as usize])
                .unwrap()
                .then(a.cmp(&b))
        });
        if let Some((threshold, score, pos)) = scan_feature(
            column,
            ctx.targets,
            &scratch,
            ctx.params.min_samples_leaf,
            eps,
        ) {
            let better = match &best {
                None => score < sse - eps,
                Some(b) => score < b.score - eps,
            };
            if better {
                best = Some(BestSplit { feature, threshold, score, split_pos: pos });
            }
        }
    }

    let Some(split) = best else {
        nodes.push(TreeNode::Leaf { value: mean });
        return (nodes.len() - 1) as u32;
    };

    let column = &ctx.columns[split.feature];
    idx.sort_by(|&a, &b| {
        column[a as usize]
            .partial_cmp(&column[b as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut right: Vec<u32> = idx.split_off(split.split_pos);
    let left_node = grow_node(ctx, idx, depth + 1, sampler, nodes);
    let right_node = grow_node(ctx, &mut right, depth + 1, sampler, nodes);
    nodes.push(TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: left_node,
        right: right_node,
    });
    (nodes.len() - 1) as u32
}

/// Grows a tree over `idx` (row indexes into `columns`/`targets`). The root
/// ends up at node 0.
pub(crate) fn grow_tree(
    ctx: &GrowContext<'_>,
    mut idx: Vec<u32>,
    mut sampler: Option<FeatureSampler<'_>>,
) -> Tree {
    debug_assert!(!idx.is_empty());
    let mut nodes = Vec::new();
    let root = grow_node(ctx, &mut idx, 0, &mut sampler, &mut nodes);
    // Rotate so the root sits at index 0 with children patched up.
    if root as usize != nodes.len() - 1 {
        unreachable!("root is always pushed last");
    }
    let last = nodes.len() - 1;
    nodes.swap(0, last);
    if last > 0 {
        for node in nodes.iter_mut() {
            if let TreeNode::Split { left, right, .. } = node {
                for child in [left, right] {
                    if *child == 0 {
                        *child = last as u32;
                    } else if *child == last as u32 {
                        *child = 0;
                    }
                }
            }
        }
        // The swapped-out node (old index 0) now lives at `last`; fix any
        // references to it. Children references to the old root (last) were
        // already remapped above; nothing else changes.
    }
    Tree { nodes }
}
