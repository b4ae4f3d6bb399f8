//! Gradient boosted decision trees with Newton steps on the logistic loss.
//!
//! Each round fits one regression tree to the first and second derivatives
//! of the loss at the current raw scores F:
//!
//! ```text
//! g = σ(F) − y        h = σ(F)·(1 − σ(F))
//! ```
//!
//! Split quality is the exact gain
//! `G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)` over the node's gradient sums,
//! and a leaf applies the damped Newton step `−G/(H+λ) · learning_rate`.
//! Candidate thresholds are the midpoints between consecutive distinct
//! feature values (exact greedy, features presorted once). Ties in gain
//! resolve to the lowest feature index, then the lowest threshold, so
//! training is a deterministic function of the dataset order and config.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::features::{schema_hash, FEATURE_COUNT};

use super::{sigmoid, softplus, EstimatorParams, ModelError, ModelMetadata, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 200,
            max_depth: 7,
            learning_rate: 0.1,
            l2_lambda: 1.0,
            min_samples_leaf: 20,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_trees < 1 {
            return Err(ModelError::Config("n_trees must be at least 1".into()));
        }
        if self.max_depth < 1 {
            return Err(ModelError::Config("max_depth must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(ModelError::Config(format!(
                "learning_rate {} must be in (0, 1]",
                self.learning_rate
            )));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(ModelError::Config("l2_lambda must be non-negative".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(ModelError::Config("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

/// One tree node. Children are indices into the tree's node array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// A regression tree; node 0 is the root. Leaf values already include the
/// learning-rate scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub trees: Vec<Tree>,
    pub config: GbdtConfig,
}

impl GbdtParams {
    /// Sum of tree outputs over a base score of zero.
    pub(crate) fn raw_score(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum()
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.trees.len() > self.config.n_trees {
            return Err(format!(
                "{} trees exceed the configured {}",
                self.trees.len(),
                self.config.n_trees
            ));
        }
        for tree in &self.trees {
            for node in &tree.nodes {
                match node {
                    Node::Split { feature, threshold, left, right } => {
                        if *feature >= FEATURE_COUNT {
                            return Err(format!("split feature index {feature} out of range"));
                        }
                        if !threshold.is_finite() {
                            return Err("non-finite split threshold".into());
                        }
                        if *left >= tree.nodes.len() || *right >= tree.nodes.len() {
                            return Err("child index out of range".into());
                        }
                    }
                    Node::Leaf { value } => {
                        if !value.is_finite() {
                            return Err("non-finite leaf value".into());
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

struct NodeStats {
    g: f64,
    h: f64,
    count: usize,
    depth: usize,
}

#[derive(Clone, Copy)]
struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grow one tree on the current gradients. Returns the tree and the leaf
/// index every sample landed in.
fn grow_tree(
    cols: &[Vec<f64>],
    sorted: &[Vec<u32>],
    g: &[f64],
    h: &[f64],
    config: &GbdtConfig,
) -> (Tree, Vec<u32>) {
    let n = g.len();
    let lambda = config.l2_lambda;
    let leaf_value = |s: &NodeStats| -s.g / (s.h + lambda) * config.learning_rate;

    let mut nodes: Vec<Option<Node>> = vec![None];
    let mut stats: Vec<NodeStats> = vec![NodeStats {
        g: g.iter().sum(),
        h: h.iter().sum(),
        count: n,
        depth: 0,
    }];
    let mut node_of: Vec<u32> = vec![0; n];
    let mut frontier: Vec<usize> = vec![0];

    while !frontier.is_empty() {
        let splittable: Vec<usize> = frontier
            .iter()
            .copied()
            .filter(|&nd| {
                stats[nd].depth < config.max_depth
                    && stats[nd].count >= 2 * config.min_samples_leaf
            })
            .collect();

        let mut best: Vec<Option<BestSplit>> = vec![None; splittable.len()];
        if !splittable.is_empty() {
            let mut slot_of: Vec<u32> = vec![u32::MAX; nodes.len()];
            for (slot, &nd) in splittable.iter().enumerate() {
                slot_of[nd] = slot as u32;
            }
            let k = splittable.len();
            let mut gl = vec![0.0f64; k];
            let mut hl = vec![0.0f64; k];
            let mut cl = vec![0usize; k];
            let mut prev = vec![0.0f64; k];
            let mut seen = vec![false; k];
            for (f, idx) in sorted.iter().enumerate() {
                gl.iter_mut().for_each(|v| *v = 0.0);
                hl.iter_mut().for_each(|v| *v = 0.0);
                cl.iter_mut().for_each(|v| *v = 0);
                seen.iter_mut().for_each(|v| *v = false);
                let col = &cols[f];
                for &iu in idx {
                    let i = iu as usize;
                    let slot = slot_of[node_of[i] as usize];
                    if slot == u32::MAX {
                        continue;
                    }
                    let slot = slot as usize;
                    let v = col[i];
                    if seen[slot] && v > prev[slot] {
                        let node = &stats[splittable[slot]];
                        let count_left = cl[slot];
                        if count_left >= config.min_samples_leaf
                            && node.count - count_left >= config.min_samples_leaf
                        {
                            let (g_l, h_l) = (gl[slot], hl[slot]);
                            let (g_r, h_r) = (node.g - g_l, node.h - h_l);
                            let gain = g_l * g_l / (h_l + lambda) + g_r * g_r / (h_r + lambda)
                                - node.g * node.g / (node.h + lambda);
                            if best[slot].is_none_or(|b| gain > b.gain) {
                                // keep the threshold strictly below the right
                                // group even when the midpoint rounds up
                                let mid = (prev[slot] + v) / 2.0;
                                let threshold = if mid < v { mid } else { prev[slot] };
                                best[slot] = Some(BestSplit { gain, feature: f, threshold });
                            }
                        }
                    }
                    gl[slot] += g[i];
                    hl[slot] += h[i];
                    cl[slot] += 1;
                    prev[slot] = v;
                    seen[slot] = true;
                }
            }
        }

        // decide every frontier node: split when a positive gain was found
        let mut split_of: Vec<Option<(usize, f64, usize, usize)>> = vec![None; nodes.len()];
        let mut next_frontier = Vec::new();
        for &nd in &frontier {
            let found = splittable
                .iter()
                .position(|&s| s == nd)
                .and_then(|slot| best[slot])
                .filter(|b| b.gain > 0.0);
            match found {
                Some(b) => {
                    let left = nodes.len();
                    let right = left + 1;
                    nodes[nd] = Some(Node::Split {
                        feature: b.feature,
                        threshold: b.threshold,
                        left,
                        right,
                    });
                    let depth = stats[nd].depth + 1;
                    nodes.push(None);
                    nodes.push(None);
                    stats.push(NodeStats { g: 0.0, h: 0.0, count: 0, depth });
                    stats.push(NodeStats { g: 0.0, h: 0.0, count: 0, depth });
                    split_of[nd] = Some((b.feature, b.threshold, left, right));
                    next_frontier.push(left);
                    next_frontier.push(right);
                }
                None => {
                    nodes[nd] = Some(Node::Leaf { value: leaf_value(&stats[nd]) });
                }
            }
        }

        if !next_frontier.is_empty() {
            for i in 0..n {
                let nd = node_of[i] as usize;
                if let Some((f, thr, left, right)) = split_of[nd] {
                    let child = if cols[f][i] <= thr { left } else { right };
                    node_of[i] = child as u32;
                    let s = &mut stats[child];
                    s.g += g[i];
                    s.h += h[i];
                    s.count += 1;
                }
            }
        }
        frontier = next_frontier;
    }

    let nodes: Vec<Node> = nodes.into_iter().map(|n| n.expect("all nodes decided")).collect();
    (Tree { nodes }, node_of)
}

fn mean_log_loss(scores: &[f64], ys: &[f64]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(ys)
        .map(|(&z, &y)| if y > 0.5 { softplus(-z) } else { softplus(z) })
        .sum();
    total / scores.len() as f64
}

/// Train a boosted ensemble. Deterministic for fixed data order and config;
/// the seed is only recorded in the metadata.
pub fn train_gbdt(
    train: &Dataset,
    config: &GbdtConfig,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    if train.is_empty() || train.n_pos == 0 || train.n_neg == 0 {
        return Err(ModelError::DegenerateData(
            "training data must contain both classes".into(),
        ));
    }
    let n = train.samples.len();
    let cols: Vec<Vec<f64>> = (0..FEATURE_COUNT)
        .map(|f| train.samples.iter().map(|s| s.x[f]).collect())
        .collect();
    let ys: Vec<f64> = train.samples.iter().map(|s| f64::from(s.y)).collect();
    let sorted: Vec<Vec<u32>> = cols
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                col[a as usize]
                    .partial_cmp(&col[b as usize])
                    .expect("finite features")
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let mut scores = vec![0.0f64; n];
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut train_loss = Vec::with_capacity(config.n_trees);
    let mut g = vec![0.0f64; n];
    let mut h = vec![0.0f64; n];
    for _ in 0..config.n_trees {
        for i in 0..n {
            let p = sigmoid(scores[i]);
            g[i] = p - ys[i];
            h[i] = p * (1.0 - p);
        }
        let (tree, node_of) = grow_tree(&cols, &sorted, &g, &h, config);
        for (score, &leaf) in scores.iter_mut().zip(&node_of) {
            match tree.nodes[leaf as usize] {
                Node::Leaf { value } => *score += value,
                Node::Split { .. } => unreachable!("samples land in leaves"),
            }
        }
        let loss = mean_log_loss(&scores, &ys);
        if !loss.is_finite() {
            return Err(ModelError::NonFinite);
        }
        train_loss.push(loss);
        trees.push(tree);
    }

    Ok(TrainedModel {
        estimator: EstimatorParams::Gbdt(GbdtParams { trees, config: *config }),
        beta: train.beta,
        metadata: ModelMetadata {
            seed,
            alpha: train.alpha,
            schema_hash: schema_hash().to_string(),
            target_category: train.target_category,
            w_h: train.w_h,
            w_p: train.w_p,
            subsampled: train.subsampled,
            train_loss,
        },
    })
}
