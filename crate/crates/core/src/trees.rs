//! CART regression trees and the bagging trainer.
//!
//! Splits are chosen greedily by squared-error reduction over the midpoints of
//! consecutive distinct feature values. Ties go to the lowest feature index, then
//! the lowest threshold, so fitting is fully deterministic.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::noise::stream_rng;
use crate::types::{Dataset, EnsembleKind, EnsembleModel};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_features: usize,
    max_depth: usize,
    min_leaf: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_leaf: 2,
        }
    }
}

impl RegressionTree {
    /// Single-leaf tree returning `value` for every input.
    pub fn constant(value: f64, n_features: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf {
                value,
                n_samples: 0,
            }],
            n_features,
            max_depth: 0,
            min_leaf: 1,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn min_leaf(&self) -> usize {
        self.min_leaf
    }

    /// Depth of the deepest leaf (0 for a single leaf).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_len("tree input width", self.n_features, x.len())?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<DVector<f64>> {
        check_len("tree input width", self.n_features, data.n_features())?;
        let x = data.features();
        let mut row = vec![0.0; self.n_features];
        Ok(DVector::from_fn(data.n_samples(), |i, _| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = x[(i, j)];
            }
            self.predict_unchecked(&row)
        }))
    }

    /// Appends a line-oriented description: a header line then one line per node.
    pub(crate) fn write_flat(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "tree {} {} {} {}",
            self.nodes.len(),
            self.n_features,
            self.max_depth,
            self.min_leaf
        );
        for node in &self.nodes {
            let _ = match node {
                Node::Leaf { value, n_samples } => writeln!(out, "L {value:e} {n_samples}"),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => writeln!(out, "S {feature} {threshold:e} {left} {right}"),
            };
        }
    }

    pub(crate) fn read_flat<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> std::result::Result<Self, (usize, String)> {
        let (lineno, header) = lines.next().ok_or((0, "missing tree header".to_string()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "tree" {
            return Err((lineno, format!("expected `tree <nodes> <features> <depth> <min_leaf>`, got `{header}`")));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| (lineno, format!("{e}: `{s}`")));
        let (n_nodes, n_features, max_depth, min_leaf) = (num(fields[1])?, num(fields[2])?, num(fields[3])?, num(fields[4])?);
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (lineno, line) = lines.next().ok_or((lineno, "truncated tree".to_string()))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            let int = |s: &str| s.parse::<usize>().map_err(|e| (lineno, format!("{e}: `{s}`")));
            let float = |s: &str| s.parse::<f64>().map_err(|e| (lineno, format!("{e}: `{s}`")));
            let node = match f.as_slice() {
                ["L", v, n] => Node::Leaf {
                    value: float(v)?,
                    n_samples: int(n)?,
                },
                ["S", feat, thr, l, r] => Node::Split {
                    feature: int(feat)?,
                    threshold: float(thr)?,
                    left: int(l)?,
                    right: int(r)?,
                },
                _ => return Err((lineno, format!("malformed node `{line}`"))),
            };
            nodes.push(node);
        }
        for node in &nodes {
            if let Node::Split { feature, left, right, .. } = *node {
                if feature >= n_features || left >= n_nodes || right >= n_nodes {
                    return Err((lineno, "node index out of range".to_string()));
                }
            }
        }
        if nodes.is_empty() {
            return Err((lineno, "tree without nodes".to_string()));
        }
        Ok(Self {
            nodes,
            n_features,
            max_depth,
            min_leaf,
        })
    }
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'a> {
    data: &'a Dataset,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn build(&mut self, indices: &[usize], depth: usize) -> usize {
        let y = self.data.targets();
        let n = indices.len();
        let mean = indices.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
        let sse: f64 = indices.iter().map(|&i| (y[i] - mean).powi(2)).sum();
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: mean,
            n_samples: n,
        });
        if depth >= self.max_depth || n < 2 * self.min_leaf || sse <= 0.0 {
            return slot;
        }
        let Some(best) = self.best_split(indices, mean, sse) else {
            return slot;
        };
        let x = self.data.features();
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            indices.iter().partition(|&&i| x[(i, best.feature)] < best.threshold);
        let left = self.build(&left_idx, depth + 1);
        let right = self.build(&right_idx, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        slot
    }

    fn best_split(&self, indices: &[usize], mean: f64, sse: f64) -> Option<SplitCandidate> {
        let x = self.data.features();
        let y = self.data.targets();
        let n = indices.len();
        let mut best: Option<SplitCandidate> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for feature in 0..self.data.n_features() {
            pairs.clear();
            pairs.extend(indices.iter().map(|&i| (x[(i, feature)], y[i] - mean)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = pairs.iter().map(|p| p.1).sum();
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += pairs[k].1;
                let n_left = k + 1;
                let n_right = n - n_left;
                if pairs[k].0 == pairs[k + 1].0 || n_left < self.min_leaf || n_right < self.min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                // SSE reduction of the split, in centered form
                let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64
                    - total * total / n as f64;
                if gain <= 1e-12 * sse {
                    continue;
                }
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitCandidate {
                        feature,
                        threshold: midpoint(pairs[k].0, pairs[k + 1].0),
                        gain,
                    });
                }
            }
        }
        best
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a + 0.5 * (b - a);
    if mid > a {
        mid
    } else {
        b
    }
}

/// Fits a regression tree by greedy squared-error splitting.
pub fn fit_tree(dataset: &Dataset, max_depth: usize, min_leaf: usize) -> Result<RegressionTree> {
    if min_leaf == 0 {
        return Err(Error::InvalidConfig("min_leaf must be at least 1".into()));
    }
    if dataset.n_samples() < min_leaf {
        return Err(Error::InvalidConfig(format!(
            "{} samples cannot fill a leaf of {min_leaf}",
            dataset.n_samples()
        )));
    }
    let mut builder = Builder {
        data: dataset,
        max_depth,
        min_leaf,
        nodes: Vec::new(),
    };
    let all: Vec<usize> = (0..dataset.n_samples()).collect();
    builder.build(&all, 0);
    Ok(RegressionTree {
        nodes: builder.nodes,
        n_features: dataset.n_features(),
        max_depth,
        min_leaf,
    })
}

pub fn fit_tree_with(dataset: &Dataset, params: TreeParams) -> Result<RegressionTree> {
    fit_tree(dataset, params.max_depth, params.min_leaf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaggingConfig {
    pub n_trees: usize,
    pub sample_fraction: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for BaggingConfig {
    fn default() -> Self {
        Self {
            n_trees: 32,
            sample_fraction: 0.6,
            max_depth: 8,
            min_leaf: 2,
            seed: 0,
        }
    }
}

impl BaggingConfig {
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("bagging needs at least one tree".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sample_fraction {} outside (0, 1]",
                self.sample_fraction
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidConfig("min_leaf must be at least 1".into()));
        }
        let size = self.subsample_size(n_samples);
        if size < self.min_leaf || size == 0 {
            return Err(Error::InvalidConfig(format!(
                "subsample of {size} rows cannot fill a leaf of {}",
                self.min_leaf
            )));
        }
        Ok(())
    }

    pub fn subsample_size(&self, n_samples: usize) -> usize {
        (self.sample_fraction * n_samples as f64).floor() as usize
    }
}

/// Row indices for tree `t`: the first `⌊fraction·N⌋` entries of a shuffle seeded by
/// `(seed, t)`, returned in ascending order.
pub fn bagging_subsample(config: &BaggingConfig, n_samples: usize, t: usize) -> Vec<usize> {
    let mut rng = stream_rng(config.seed, &[t as u64]);
    let mut idx: Vec<usize> = (0..n_samples).collect();
    idx.shuffle(&mut rng);
    idx.truncate(config.subsample_size(n_samples));
    idx.sort_unstable();
    idx
}

/// Trains `T` trees, each on its own subsample drawn without replacement.
pub fn fit_bagging(dataset: &Dataset, config: &BaggingConfig) -> Result<EnsembleModel> {
    config.validate(dataset.n_samples())?;
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let rows = bagging_subsample(config, dataset.n_samples(), t);
            fit_tree(&dataset.subset(&rows)?, config.max_depth, config.min_leaf)
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleModel::new(trees, EnsembleKind::Bagging)
}
