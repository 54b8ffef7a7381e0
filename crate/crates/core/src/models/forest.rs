//! Decision trees and random forests, used both as the hybrid partition
//! gate (classification) and as a regression baseline.
//!
//! Splits draw `mtry` candidate features, thresholds sit at midpoints
//! between sorted distinct values, and the criterion is Gini impurity
//! (classification) or variance reduction (regression). Ties break toward
//! the lowest attribute index, then the lowest threshold, so training is
//! deterministic given the seed. Forest trees train on independent
//! bootstrap resamples with per-tree RNG streams derived from the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Fingerprint;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::preprocess::NormalizationParams;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeMode {
    Classification,
    Regression,
}

/// Per-split feature subset size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mtry {
    /// ceil(sqrt(d)) — classification default.
    Sqrt,
    /// ceil(d/3) — regression default.
    Third,
    All,
    Fixed(usize),
}

impl Mtry {
    pub fn resolve(self, d: usize) -> usize {
        let m = match self {
            Mtry::Sqrt => (d as f64).sqrt().ceil() as usize,
            Mtry::Third => (d as f64 / 3.0).ceil() as usize,
            Mtry::All => d,
            Mtry::Fixed(m) => m,
        };
        m.clamp(1, d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub mtry: Mtry,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { mtry: Mtry::All, min_leaf: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub mtry: Mtry,
    pub min_leaf: usize,
    pub seed: u64,
    pub bootstrap: bool,
}

impl ForestParams {
    pub fn classification(seed: u64) -> Self {
        ForestParams { trees: 100, mtry: Mtry::Sqrt, min_leaf: 1, seed, bootstrap: true }
    }

    pub fn regression(seed: u64) -> Self {
        ForestParams { trees: 100, mtry: Mtry::Third, min_leaf: 1, seed, bootstrap: true }
    }
}

/// Tree nodes stored in pre-order; children referenced by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { attr: u32, threshold: f64, left: u32, right: u32 },
    Leaf { value: f64, histogram: Option<Vec<u32>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub mode: TreeMode,
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, query: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { attr, threshold, left, right } => {
                    at = if query[*attr as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

enum Outcome<'a> {
    Classes(&'a [u32]),
    Values(&'a [f64]),
}

struct TreeBuilder<'a> {
    features: &'a FeatureMatrix,
    outcome: Outcome<'a>,
    n_classes: usize,
    mtry: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl<'a> TreeBuilder<'a> {
    fn leaf(&mut self, indices: &[usize]) -> u32 {
        let node = match &self.outcome {
            Outcome::Classes(labels) => {
                let mut hist = vec![0u32; self.n_classes];
                for &i in indices {
                    hist[labels[i] as usize] += 1;
                }
                // majority class, ties toward the lowest index
                let mut best = 0usize;
                for c in 1..self.n_classes {
                    if hist[c] > hist[best] {
                        best = c;
                    }
                }
                Node::Leaf { value: best as f64, histogram: Some(hist) }
            }
            Outcome::Values(targets) => {
                let mean = indices.iter().map(|&i| targets[i]).sum::<f64>() / indices.len() as f64;
                Node::Leaf { value: mean, histogram: None }
            }
        };
        self.nodes.push(node);
        (self.nodes.len() - 1) as u32
    }

    fn is_pure(&self, indices: &[usize]) -> bool {
        match &self.outcome {
            Outcome::Classes(labels) => {
                let first = labels[indices[0]];
                indices.iter().all(|&i| labels[i] == first)
            }
            Outcome::Values(targets) => {
                let first = targets[indices[0]];
                indices.iter().all(|&i| targets[i] == first)
            }
        }
    }

    /// Best (gain, attr, threshold) over the candidate features, or None if
    /// no split separates the node. Candidates are visited in ascending
    /// attribute order and positions in ascending threshold order, and only
    /// strictly better gains replace the incumbent.
    fn best_split(&self, indices: &[usize], candidates: &[usize]) -> Option<(f64, usize, f64)> {
        let n = indices.len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        for &attr in candidates {
            pairs.clear();
            pairs.extend(indices.iter().map(|&i| (self.features.get(i, attr), i)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            match &self.outcome {
                Outcome::Classes(labels) => {
                    let mut total = vec![0u32; self.n_classes];
                    for &(_, i) in pairs.iter() {
                        total[labels[i] as usize] += 1;
                    }
                    let parent = gini(&total, n as f64);
                    let mut left = vec![0u32; self.n_classes];
                    for pos in 0..n - 1 {
                        left[labels[pairs[pos].1] as usize] += 1;
                        if pairs[pos].0 == pairs[pos + 1].0 {
                            continue;
                        }
                        let nl = pos + 1;
                        let nr = n - nl;
                        if nl < self.min_leaf || nr < self.min_leaf {
                            continue;
                        }
                        let mut right_hist = vec![0u32; self.n_classes];
                        for c in 0..self.n_classes {
                            right_hist[c] = total[c] - left[c];
                        }
                        let score = (nl as f64 * gini(&left, nl as f64)
                            + nr as f64 * gini(&right_hist, nr as f64))
                            / n as f64;
                        let gain = parent - score;
                        if gain > 0.0 && best.map_or(true, |(g, _, _)| gain > g) {
                            let threshold = midpoint(pairs[pos].0, pairs[pos + 1].0);
                            best = Some((gain, attr, threshold));
                        }
                    }
                }
                Outcome::Values(targets) => {
                    let total_sum: f64 = pairs.iter().map(|&(_, i)| targets[i]).sum();
                    let total_sq: f64 = pairs.iter().map(|&(_, i)| targets[i] * targets[i]).sum();
                    let parent = variance(total_sum, total_sq, n as f64);
                    let mut left_sum = 0.0;
                    let mut left_sq = 0.0;
                    for pos in 0..n - 1 {
                        let y = targets[pairs[pos].1];
                        left_sum += y;
                        left_sq += y * y;
                        if pairs[pos].0 == pairs[pos + 1].0 {
                            continue;
                        }
                        let nl = pos + 1;
                        let nr = n - nl;
                        if nl < self.min_leaf || nr < self.min_leaf {
                            continue;
                        }
                        let score = (nl as f64 * variance(left_sum, left_sq, nl as f64)
                            + nr as f64
                                * variance(total_sum - left_sum, total_sq - left_sq, nr as f64))
                            / n as f64;
                        let gain = parent - score;
                        if gain > 0.0 && best.map_or(true, |(g, _, _)| gain > g) {
                            let threshold = midpoint(pairs[pos].0, pairs[pos + 1].0);
                            best = Some((gain, attr, threshold));
                        }
                    }
                }
            }
        }
        best
    }

    fn build(&mut self, indices: &mut Vec<usize>, rng: &mut ChaCha8Rng) -> u32 {
        if indices.len() < 2 * self.min_leaf || self.is_pure(indices) {
            return self.leaf(indices);
        }
        let d = self.features.n_cols();
        let candidates = sample_features(d, self.mtry, rng);
        let Some((_, attr, threshold)) = self.best_split(indices, &candidates) else {
            return self.leaf(indices);
        };
        let (mut left_idx, mut right_idx): (Vec<usize>, Vec<usize>) =
            indices.iter().partition(|&&i| self.features.get(i, attr) <= threshold);
        // pre-order: parent, then the whole left subtree, then the right
        let at = self.nodes.len();
        self.nodes.push(Node::Split { attr: attr as u32, threshold, left: 0, right: 0 });
        let left = self.build(&mut left_idx, rng);
        let right = self.build(&mut right_idx, rng);
        if let Node::Split { left: l, right: r, .. } = &mut self.nodes[at] {
            *l = left;
            *r = right;
        }
        at as u32
    }
}

fn gini(hist: &[u32], n: f64) -> f64 {
    let mut acc = 1.0;
    for &c in hist {
        let f = c as f64 / n;
        acc -= f * f;
    }
    acc
}

fn variance(sum: f64, sum_sq: f64, n: f64) -> f64 {
    (sum_sq / n - (sum / n) * (sum / n)).max(0.0)
}

fn midpoint(a: f64, b: f64) -> f64 {
    a + (b - a) / 2.0
}

/// `m` distinct feature indices. All features skip the RNG entirely;
/// otherwise a partial Fisher-Yates draw, returned sorted so candidate
/// order (and therefore tie-breaking) is stable.
fn sample_features(d: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if m >= d {
        return (0..d).collect();
    }
    let mut pool: Vec<usize> = (0..d).collect();
    for slot in 0..m {
        let pick = rng.gen_range(slot..d);
        pool.swap(slot, pick);
    }
    let mut chosen = pool[..m].to_vec();
    chosen.sort_unstable();
    chosen
}

fn train_tree_on(
    features: &FeatureMatrix,
    outcome: Outcome<'_>,
    n_classes: usize,
    indices: &mut Vec<usize>,
    params: TreeParams,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let mode = match outcome {
        Outcome::Classes(_) => TreeMode::Classification,
        Outcome::Values(_) => TreeMode::Regression,
    };
    let mut builder = TreeBuilder {
        features,
        outcome,
        n_classes,
        mtry: params.mtry.resolve(features.n_cols()),
        min_leaf: params.min_leaf.max(1),
        nodes: Vec::new(),
    };
    builder.build(indices, rng);
    DecisionTree { mode, nodes: builder.nodes }
}

/// Train a single classification tree over all points.
pub fn train_classification_tree(
    features: &FeatureMatrix,
    labels: &[u32],
    n_classes: usize,
    params: TreeParams,
) -> Result<DecisionTree> {
    check_outcome(features, labels.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut idx: Vec<usize> = (0..features.n_rows()).collect();
    Ok(train_tree_on(features, Outcome::Classes(labels), n_classes, &mut idx, params, &mut rng))
}

/// Train a single regression tree over all points.
pub fn train_regression_tree(
    features: &FeatureMatrix,
    targets: &[f64],
    params: TreeParams,
) -> Result<DecisionTree> {
    check_outcome(features, targets.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut idx: Vec<usize> = (0..features.n_rows()).collect();
    Ok(train_tree_on(features, Outcome::Values(targets), 0, &mut idx, params, &mut rng))
}

fn check_outcome(features: &FeatureMatrix, outcomes: usize) -> Result<()> {
    if features.n_rows() == 0 {
        return Err(Error::train("tree training needs a non-empty dataset"));
    }
    if features.n_rows() != outcomes {
        return Err(Error::train(format!(
            "feature rows {} do not match outcome count {outcomes}",
            features.n_rows()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub mode: TreeMode,
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
    pub params: ForestParams,
    /// Normalization the forest was trained under (typically none; trees
    /// are scale-invariant).
    pub norm: NormalizationParams,
}

impl Forest {
    pub fn train_classifier(
        features: &FeatureMatrix,
        labels: &[u32],
        n_classes: usize,
        params: ForestParams,
        norm: NormalizationParams,
    ) -> Result<Forest> {
        check_outcome(features, labels.len())?;
        if params.trees < 1 {
            return Err(Error::train("forest needs at least one tree"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::train(format!("label {bad} outside 0..{n_classes}")));
        }
        let trees = train_parallel(features, params, |features, mut idx, tree_params, rng| {
            train_tree_on(features, Outcome::Classes(labels), n_classes, &mut idx, tree_params, rng)
        });
        Ok(Forest { mode: TreeMode::Classification, trees, n_classes, params, norm })
    }

    pub fn train_regressor(
        features: &FeatureMatrix,
        targets: &[f64],
        params: ForestParams,
        norm: NormalizationParams,
    ) -> Result<Forest> {
        check_outcome(features, targets.len())?;
        if params.trees < 1 {
            return Err(Error::train("forest needs at least one tree"));
        }
        let trees = train_parallel(features, params, |features, mut idx, tree_params, rng| {
            train_tree_on(features, Outcome::Values(targets), 0, &mut idx, tree_params, rng)
        });
        Ok(Forest { mode: TreeMode::Regression, trees, params, n_classes: 0, norm })
    }

    /// Majority vote with the fraction each class received. Ties break
    /// toward the lowest label index.
    pub fn classify(&self, query: &[f64]) -> Result<(u32, Vec<f64>)> {
        if self.mode != TreeMode::Classification {
            return Err(Error::predict("classify called on a regression forest"));
        }
        let mut votes = vec![0u32; self.n_classes];
        for tree in &self.trees {
            votes[tree.predict(query) as usize] += 1;
        }
        let total = self.trees.len() as f64;
        let fractions: Vec<f64> = votes.iter().map(|&v| v as f64 / total).collect();
        let mut winner = 0usize;
        for c in 1..self.n_classes {
            if votes[c] > votes[winner] {
                winner = c;
            }
        }
        Ok((winner as u32, fractions))
    }

    /// Mean of per-tree means.
    pub fn predict(&self, query: &[f64]) -> Result<f64> {
        if self.mode != TreeMode::Regression {
            return Err(Error::predict("predict called on a classification forest"));
        }
        Ok(self.trees.iter().map(|t| t.predict(query)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn predict_fingerprint(&self, fp: &Fingerprint) -> Result<f64> {
        let q = self.norm.apply(fp)?;
        self.predict(&q)
    }

    pub fn classify_fingerprint(&self, fp: &Fingerprint) -> Result<(u32, Vec<f64>)> {
        let q = self.norm.apply(fp)?;
        self.classify(&q)
    }
}

/// Trees are independent given their derived RNG streams, so they can train
/// on worker threads and still come out identical to a sequential run.
fn train_parallel<F>(features: &FeatureMatrix, params: ForestParams, train_one: F) -> Vec<DecisionTree>
where
    F: Fn(&FeatureMatrix, Vec<usize>, TreeParams, &mut ChaCha8Rng) -> DecisionTree + Sync,
{
    use rayon::prelude::*;
    let n = features.n_rows();
    (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_indexed(params.seed, "tree", t as u64));
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let tree_params =
                TreeParams { mtry: params.mtry, min_leaf: params.min_leaf, seed: params.seed };
            train_one(features, idx, tree_params, &mut rng)
        })
        .collect()
}
