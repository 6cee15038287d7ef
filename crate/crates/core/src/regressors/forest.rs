//! Random forest regression: CART trees grown on bootstrap resamples with
//! variance-reduction splits over (optionally random) feature subsets;
//! the forest prediction is the mean of its trees' predictions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seed::derive_seed;

/// Forest hyperparameters. `features_per_split: None` considers every
/// feature at every split; `max_depth: None` grows until leaves are pure or
/// too small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            tree_count: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Flat tree node. `feature == LEAF` marks a leaf holding `value`; split
/// nodes route `x[feature] <= threshold` left, else right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
}

pub const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            let node = &self.nodes[idx];
            if node.feature == LEAF {
                return node.value;
            }
            idx = if x[node.feature as usize] <= node.threshold { node.left } else { node.right } as usize;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub config: ForestConfig,
    pub input_dim: usize,
}

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }
}

/// Fit `tree_count` CART regression trees. Per-tree seeds derive
/// deterministically from the config seed, so results are reproducible
/// regardless of fitting order.
pub fn fit_forest(cfg: &ForestConfig, xs: &[Vec<f64>], ys: &[f64]) -> ForestModel {
    assert!(!xs.is_empty(), "forest needs a non-empty training set");
    assert!(cfg.tree_count >= 1, "tree_count must be >= 1");
    assert!(cfg.min_samples_leaf >= 1, "min_samples_leaf must be >= 1");
    let input_dim = xs[0].len();
    let trees = (0..cfg.tree_count)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 30, t as u64));
            let indices: Vec<usize> = if cfg.bootstrap {
                (0..xs.len()).map(|_| rng.gen_range(0..xs.len())).collect()
            } else {
                (0..xs.len()).collect()
            };
            let mut builder = TreeBuilder { xs, ys, cfg, input_dim, rng, nodes: Vec::new() };
            builder.grow(indices, 0);
            Tree { nodes: builder.nodes }
        })
        .collect();
    ForestModel { trees, config: cfg.clone(), input_dim }
}

struct TreeBuilder<'a> {
    xs: &'a [Vec<f64>],
    ys: &'a [f64],
    cfg: &'a ForestConfig,
    input_dim: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    sse: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> u32 {
        let mean = indices.iter().map(|&i| self.ys[i]).sum::<f64>() / indices.len() as f64;
        let at_depth_limit = self.cfg.max_depth.is_some_and(|d| depth >= d);
        let too_small = indices.len() < 2 * self.cfg.min_samples_leaf || indices.len() < 2;
        let node_idx = self.nodes.len() as u32;
        if at_depth_limit || too_small {
            self.nodes.push(leaf(mean));
            return node_idx;
        }
        let Some(split) = self.best_split(&indices) else {
            self.nodes.push(leaf(mean));
            return node_idx;
        };
        // SSE of not splitting; only strictly better splits are taken.
        let parent_sse: f64 = indices.iter().map(|&i| (self.ys[i] - mean).powi(2)).sum();
        if split.sse >= parent_sse {
            self.nodes.push(leaf(mean));
            return node_idx;
        }
        self.nodes.push(TreeNode {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: 0,
            right: 0,
            value: mean,
        });
        let left = self.grow(split.left, depth + 1);
        let right = self.grow(split.right, depth + 1);
        self.nodes[node_idx as usize].left = left;
        self.nodes[node_idx as usize].right = right;
        node_idx
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match self.cfg.features_per_split {
            Some(m) if m < self.input_dim => {
                // Partial Fisher-Yates: first m entries form the subset.
                let mut all: Vec<usize> = (0..self.input_dim).collect();
                for i in 0..m {
                    let j = self.rng.gen_range(i..all.len());
                    all.swap(i, j);
                }
                all.truncate(m);
                all.sort_unstable();
                all
            }
            _ => (0..self.input_dim).collect(),
        }
    }

    fn best_split(&mut self, indices: &[usize]) -> Option<BestSplit> {
        let mut best: Option<BestSplit> = None;
        for feature in self.candidate_features() {
            let mut order: Vec<usize> = indices.to_vec();
            order.sort_by(|&a, &b| {
                self.xs[a][feature]
                    .partial_cmp(&self.xs[b][feature])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            // Prefix sums over the sorted order let every cut be scored in
            // O(1).
            let n = order.len();
            let mut prefix_sum = vec![0.0; n + 1];
            let mut prefix_sq = vec![0.0; n + 1];
            for (i, &idx) in order.iter().enumerate() {
                prefix_sum[i + 1] = prefix_sum[i] + self.ys[idx];
                prefix_sq[i + 1] = prefix_sq[i] + self.ys[idx] * self.ys[idx];
            }
            for cut in self.cfg.min_samples_leaf..=(n - self.cfg.min_samples_leaf) {
                let lo = self.xs[order[cut - 1]][feature];
                let hi = self.xs[order[cut]][feature];
                if lo == hi {
                    continue;
                }
                let (nl, nr) = (cut as f64, (n - cut) as f64);
                let sse_left = prefix_sq[cut] - prefix_sum[cut] * prefix_sum[cut] / nl;
                let (sum_r, sq_r) = (prefix_sum[n] - prefix_sum[cut], prefix_sq[n] - prefix_sq[cut]);
                let sse_right = sq_r - sum_r * sum_r / nr;
                let sse = sse_left + sse_right;
                if best.as_ref().is_none_or(|b| sse < b.sse) {
                    best = Some(BestSplit {
                        feature,
                        threshold: 0.5 * (lo + hi),
                        sse,
                        left: order[..cut].to_vec(),
                        right: order[cut..].to_vec(),
                    });
                }
            }
        }
        best
    }
}

fn leaf(value: f64) -> TreeNode {
    TreeNode { feature: LEAF, threshold: 0.0, left: 0, right: 0, value }
}
