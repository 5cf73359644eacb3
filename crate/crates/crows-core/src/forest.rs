//! Random-forest regression for feature ranking.
//!
//! The regression target is the counterfactual reward of a buy issued at
//! each bar, computed by the environment's exit scan; the inputs are the
//! materialized pattern columns. Feature importance is mean decrease in
//! impurity: every split credits its sum-of-squares reduction to the split
//! feature, summed over all trees and normalized.
//!
//! Trees are CART with variance-reduction splits, bootstrap row sampling,
//! and a fresh random feature subset per node. Each tree consumes its own
//! seeded stream, so fits are reproducible and trees are independent.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::env::{hypothetical_buy_reward, ExitRule};
use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::fmath;
use crate::miner::MinedPattern;
use crate::rng;

/// Row-major labeled dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }
}

/// One labeled row per bar of every episode: the named columns as
/// features, the hypothetical buy-at-t reward as the label. The last bar
/// of a day labels 0 (an immediate day-end exit at the entry price).
pub fn build_dataset_from_columns(
    episodes: &[Episode],
    names: &[String],
    rule: &ExitRule,
) -> Result<Dataset> {
    if names.is_empty() {
        return Err(Error::EmptyFeatureVector);
    }
    rule.validate()?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for ep in episodes {
        let cols: Vec<&[f64]> = names
            .iter()
            .map(|n| ep.column(n))
            .collect::<Result<_>>()?;
        for t in 0..ep.len() {
            rows.push(cols.iter().map(|c| c[t]).collect());
            labels.push(hypothetical_buy_reward(ep, rule, t));
        }
    }
    Ok(Dataset {
        names: names.to_vec(),
        rows,
        labels,
    })
}

/// [`build_dataset_from_columns`] over the mined patterns' columns.
pub fn build_dataset(
    episodes: &[Episode],
    patterns: &[MinedPattern],
    rule: &ExitRule,
) -> Result<Dataset> {
    let names: Vec<String> = patterns.iter().map(|p| p.pattern.column_name()).collect();
    build_dataset_from_columns(episodes, &names, rule)
}

/// Forest hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestHyper {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per node; `None` means `floor(sqrt(F))`, at least 1.
    pub feature_subsample: Option<usize>,
    /// Bootstrap rows per tree; disable for exact-memorization checks.
    pub bootstrap: bool,
}

impl Default for ForestHyper {
    fn default() -> Self {
        ForestHyper {
            n_trees: 200,
            max_depth: 8,
            min_leaf: 20,
            feature_subsample: None,
            bootstrap: true,
        }
    }
}

impl ForestHyper {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 {
            return Err(Error::BadParameter {
                what: "n_trees and min_leaf must be >= 1",
            });
        }
        if self.feature_subsample == Some(0) {
            return Err(Error::BadParameter {
                what: "feature_subsample must be >= 1 when given",
            });
        }
        Ok(())
    }
}

enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

/// A fitted forest with accumulated impurity-decrease importances.
pub struct Forest {
    trees: Vec<Tree>,
    importance_raw: Vec<f64>,
    n_features: usize,
}

impl Forest {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        sum / self.trees.len() as f64
    }

    /// Importances normalized to sum 1, or all zero if no split occurred.
    pub fn importances(&self) -> Vec<f64> {
        let total: f64 = self.importance_raw.iter().sum();
        if total > 0.0 {
            self.importance_raw.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; self.n_features]
        }
    }
}

/// Top-k features by importance.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Feature indices, best first; ties resolve to the lower index.
    pub indices: Vec<usize>,
    /// Set when `k` exceeded the feature count and the list was clipped.
    pub clipped: bool,
}

pub fn rank_and_select(forest: &Forest, k: usize) -> Selection {
    let scores = forest.importances();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("importances are finite")
            .then_with(|| a.cmp(&b))
    });
    let take = k.min(order.len());
    Selection {
        clipped: k > order.len(),
        indices: order[..take].to_vec(),
    }
}

/// Fits `n_trees` CART regression trees on bootstrap samples.
pub fn fit_forest(data: &Dataset, hyper: &ForestHyper, seed: u64) -> Result<Forest> {
    if data.n_rows() < 2 || data.n_features() == 0 {
        return Err(Error::InsufficientData {
            rows: data.n_rows(),
            features: data.n_features(),
        });
    }
    hyper.validate()?;
    if !data.labels.iter().all(|l| l.is_finite()) {
        return Err(Error::NonFiniteLoss {
            iteration: 0,
            detail: String::from("dataset labels must be finite"),
        });
    }
    let subsample = hyper
        .feature_subsample
        .unwrap_or_else(|| (fmath::sqrt(data.n_features() as f64) as usize).max(1))
        .clamp(1, data.n_features());

    let mut trees = Vec::with_capacity(hyper.n_trees);
    let mut importance_raw = vec![0.0; data.n_features()];
    for tree_idx in 0..hyper.n_trees {
        let mut tree_rng = rng::stream(seed, tree_idx as u64);
        let rows: Vec<usize> = if hyper.bootstrap {
            (0..data.n_rows())
                .map(|_| tree_rng.gen_range(0..data.n_rows()))
                .collect()
        } else {
            (0..data.n_rows()).collect()
        };
        let mut builder = TreeBuilder {
            data,
            hyper,
            subsample,
            rng: &mut tree_rng,
            nodes: Vec::new(),
            importance: &mut importance_raw,
        };
        builder.grow(rows, 0);
        trees.push(Tree {
            nodes: builder.nodes,
        });
    }
    Ok(Forest {
        trees,
        importance_raw,
        n_features: data.n_features(),
    })
}

struct TreeBuilder<'a> {
    data: &'a Dataset,
    hyper: &'a ForestHyper,
    subsample: usize,
    rng: &'a mut rng::Rng,
    nodes: Vec<Node>,
    importance: &'a mut Vec<f64>,
}

impl TreeBuilder<'_> {
    // Builds the subtree over `rows`, returns its node index.
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let n = rows.len();
        let (sum, sum_sq) = rows.iter().fold((0.0, 0.0), |(s, q), &r| {
            let y = self.data.labels[r];
            (s + y, q + y * y)
        });
        let mean = sum / n as f64;
        let sse = (sum_sq - sum * sum / n as f64).max(0.0);

        let can_split = depth < self.hyper.max_depth && n >= 2 * self.hyper.min_leaf && sse > 0.0;
        let best = if can_split { self.best_split(&rows, sse) } else { None };

        let Some((feature, threshold, gain)) = best else {
            let id = self.nodes.len();
            self.nodes.push(Node::Leaf { value: mean });
            return id;
        };

        self.importance[feature] += gain;
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.data.rows[r][feature] <= threshold);

        // Reserve the split slot before recursing so node ids are preorder.
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean });
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    // Best (feature, threshold, SSE reduction) over a fresh feature subset,
    // or None when no candidate strictly reduces impurity.
    fn best_split(&mut self, rows: &[usize], parent_sse: f64) -> Option<(usize, f64, f64)> {
        let n_feat = self.data.n_features();
        let mut candidates: Vec<usize> = (0..n_feat).collect();
        // Partial Fisher-Yates: the first `subsample` entries are the node's
        // feature subset, in draw order.
        for i in 0..self.subsample {
            let j = self.rng.gen_range(i..n_feat);
            candidates.swap(i, j);
        }

        let n = rows.len();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for &feature in &candidates[..self.subsample] {
            pairs.clear();
            pairs.extend(
                rows.iter()
                    .map(|&r| (self.data.rows[r][feature], self.data.labels[r])),
            );
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("features are finite"));

            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            let (total_sum, total_sq) = pairs
                .iter()
                .fold((0.0, 0.0), |(s, q), &(_, y)| (s + y, q + y * y));
            for i in 1..n {
                let (v_prev, y_prev) = pairs[i - 1];
                left_sum += y_prev;
                left_sq += y_prev * y_prev;
                if pairs[i].0 <= v_prev {
                    continue;
                }
                if i < self.hyper.min_leaf || n - i < self.hyper.min_leaf {
                    continue;
                }
                let right_sum = total_sum - left_sum;
                let right_sq = total_sq - left_sq;
                let left_sse = (left_sq - left_sum * left_sum / i as f64).max(0.0);
                let right_sse =
                    (right_sq - right_sum * right_sum / (n - i) as f64).max(0.0);
                let gain = parent_sse - left_sse - right_sse;
                if gain > 0.0 && best.map_or(true, |(_, _, g)| gain > g) {
                    // Threshold is the left block's max value, so the
                    // `<=` partition reproduces this exact split even for
                    // adjacent floats (a midpoint could round onto v[i]).
                    best = Some((feature, v_prev, gain));
                }
            }
        }
        best
    }
}
