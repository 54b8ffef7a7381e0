//! Partition-gated K* acceleration.
//!
//! The survey is split into rectangular tile blocks, a random-forest gate
//! maps a fingerprint to the block it was most likely taken in, and a K*
//! expert trained only on that block's points produces the position. The
//! per-query candidate count drops from the full survey size to one
//! partition's population with no change to the K* mechanics.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Bounds, Dataset, Fingerprint, GridPosition};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::models::forest::{Forest, ForestParams};
use crate::models::kstar::{KStarCore, KStarDual};
use crate::preprocess::{NormMethod, NormalizationParams};
use crate::seeds;

/// Rectangular blocks tiling the building bounds exactly: a product grid of
/// column cuts and row cuts over the tile grid. Block ids are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionScheme {
    pub bounds: Bounds,
    /// Interior cut positions along x, strictly increasing, in (0, width).
    pub col_cuts: Vec<u32>,
    /// Interior cut positions along y, strictly increasing, in (0, height).
    pub row_cuts: Vec<u32>,
    pub target_points: usize,
}

/// One block of the scheme, half-open in tiles (the building edge closes
/// the last block).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: usize,
    pub x0: u32,
    pub x1: u32,
    pub y0: u32,
    pub y1: u32,
}

impl PartitionScheme {
    pub fn n_cols(&self) -> usize {
        self.col_cuts.len() + 1
    }

    pub fn n_rows(&self) -> usize {
        self.row_cuts.len() + 1
    }

    pub fn n_partitions(&self) -> usize {
        self.n_cols() * self.n_rows()
    }

    /// Partition id of a position. Positions within bounds always map to
    /// exactly one block.
    pub fn partition_of(&self, pos: &GridPosition) -> usize {
        let col = self.col_cuts.partition_point(|&c| (c as f64) <= pos.x);
        let row = self.row_cuts.partition_point(|&c| (c as f64) <= pos.y);
        row * self.n_cols() + col
    }

    pub fn blocks(&self) -> Vec<Block> {
        let mut xs = vec![0u32];
        xs.extend_from_slice(&self.col_cuts);
        xs.push(self.bounds.width_tiles);
        let mut ys = vec![0u32];
        ys.extend_from_slice(&self.row_cuts);
        ys.push(self.bounds.height_tiles);
        let mut blocks = Vec::with_capacity(self.n_partitions());
        for r in 0..self.n_rows() {
            for c in 0..self.n_cols() {
                blocks.push(Block {
                    id: r * self.n_cols() + c,
                    x0: xs[c],
                    x1: xs[c + 1],
                    y0: ys[r],
                    y1: ys[r + 1],
                });
            }
        }
        blocks
    }

    /// Points per partition id.
    pub fn populations(&self, dataset: &Dataset) -> Vec<usize> {
        let mut pops = vec![0usize; self.n_partitions()];
        for p in dataset.points() {
            pops[self.partition_of(&p.position)] += 1;
        }
        pops
    }

    /// Choose a partition grid whose largest population stays within
    /// 1.25x the target. Grid shapes are tried from `ceil(N/target)`
    /// partitions upward, squarest cells first, with cuts at
    /// population-balancing tile boundaries. Deterministic.
    pub fn build(dataset: &Dataset, target_points: usize) -> Result<PartitionScheme> {
        if target_points < 1 {
            return Err(Error::config("target points per partition must be >= 1"));
        }
        let n = dataset.len();
        let bounds = dataset.bounds();
        if n == 0 {
            return Err(Error::data("cannot partition an empty dataset"));
        }
        let cap = 1.25 * target_points as f64;
        let mut xs: Vec<f64> = dataset.points().iter().map(|p| p.position.x).collect();
        let mut ys: Vec<f64> = dataset.points().iter().map(|p| p.position.y).collect();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);

        let first_p = n.div_ceil(target_points);
        let max_p = (first_p * 8).max(16).min(n.max(1));
        let mut best: Option<(usize, PartitionScheme)> = None; // (max_pop, scheme)
        for p in first_p..=max_p {
            for (gx, gy) in factor_pairs(p, bounds) {
                let col_cuts = balance_cuts(&xs, gx, bounds.width_tiles);
                let row_cuts = balance_cuts(&ys, gy, bounds.height_tiles);
                let scheme = PartitionScheme {
                    bounds,
                    col_cuts,
                    row_cuts,
                    target_points,
                };
                let max_pop = scheme.populations(dataset).into_iter().max().unwrap_or(0);
                if (max_pop as f64) <= cap {
                    return Ok(scheme);
                }
                if best.as_ref().map_or(true, |(m, _)| max_pop < *m) {
                    best = Some((max_pop, scheme));
                }
            }
        }
        // nothing met the cap (extreme density concentration); keep the
        // most balanced grid found
        Ok(best.expect("at least one candidate grid").1)
    }
}

/// Factor pairs (gx, gy) of p that fit the tile grid, squarest cells first.
fn factor_pairs(p: usize, bounds: Bounds) -> Vec<(usize, usize)> {
    let w = bounds.width_tiles as f64;
    let h = bounds.height_tiles as f64;
    let mut pairs: Vec<(usize, usize)> = (1..=p)
        .filter(|gx| p % gx == 0)
        .map(|gx| (gx, p / gx))
        .filter(|&(gx, gy)| gx as u32 <= bounds.width_tiles && gy as u32 <= bounds.height_tiles)
        .collect();
    pairs.sort_by(|&(ax, ay), &(bx, by)| {
        let aspect_a = ((w / ax as f64) / (h / ay as f64)).ln().abs();
        let aspect_b = ((w / bx as f64) / (h / by as f64)).ln().abs();
        aspect_a.total_cmp(&aspect_b).then(ax.cmp(&bx))
    });
    pairs
}

/// Interior tile-boundary cuts that split the sorted coordinates into
/// `groups` near-equal populations. Cuts are strictly increasing; each is
/// the integer boundary whose below-count lands closest to the quantile
/// (ties toward the lower boundary).
fn balance_cuts(sorted: &[f64], groups: usize, extent: u32) -> Vec<u32> {
    let n = sorted.len();
    let mut cuts = Vec::with_capacity(groups.saturating_sub(1));
    let mut prev = 0u32;
    for k in 1..groups {
        let want = (k * n) as f64 / groups as f64;
        let mut best_cut = prev + 1;
        let mut best_err = f64::INFINITY;
        for c in prev + 1..=extent.saturating_sub(groups as u32 - k as u32) {
            let below = sorted.partition_point(|&v| v < c as f64);
            let err = (below as f64 - want).abs();
            if err < best_err {
                best_err = err;
                best_cut = c;
            }
        }
        cuts.push(best_cut);
        prev = best_cut;
    }
    cuts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridParams {
    /// Population each partition aims for (the paper regime is ~400-500).
    pub target_points: usize,
    pub gate_trees: usize,
    pub blend_percent: f64,
    /// Below this top vote fraction the runner-up expert is consulted too.
    pub fallback_threshold: f64,
    /// Folds for the gate's reported cross-validated accuracy; 0 skips it.
    pub gate_cv_folds: usize,
}

impl Default for HybridParams {
    fn default() -> Self {
        HybridParams {
            target_points: 450,
            gate_trees: 100,
            blend_percent: 20.0,
            fallback_threshold: 0.5,
            gate_cv_folds: 0,
        }
    }
}

/// Per-prediction bookkeeping.
#[derive(Debug, Clone)]
pub struct HybridDiagnostics {
    /// Block id the gate selected.
    pub partition_id: usize,
    /// Candidate instances examined (sum over consulted experts).
    pub comparisons: u64,
    /// Gate vote fraction per kept partition (index-aligned to `kept_ids`).
    pub vote_fractions: Vec<f64>,
    /// Runner-up expert was consulted.
    pub fallback: bool,
}

/// Persistable part of a hybrid model; experts are rebuilt from the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HybridBundle {
    pub scheme: PartitionScheme,
    pub gate: Forest,
    /// Block id per gate label.
    pub kept_ids: Vec<usize>,
    /// Block ids with no training points, dropped from the label set.
    pub dropped_ids: Vec<usize>,
    pub gate_cv_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HybridModel {
    scheme: PartitionScheme,
    gate: Forest,
    kept_ids: Vec<usize>,
    dropped_ids: Vec<usize>,
    experts: Vec<KStarDual>,
    gate_cv_accuracy: Option<f64>,
    params: HybridParams,
}

impl HybridModel {
    pub fn train(dataset: &Dataset, params: HybridParams, seed: u64) -> Result<HybridModel> {
        let scheme = PartitionScheme::build(dataset, params.target_points)?;
        Self::train_with_scheme(dataset, scheme, params, seed)
    }

    pub fn train_with_scheme(
        dataset: &Dataset,
        scheme: PartitionScheme,
        params: HybridParams,
        seed: u64,
    ) -> Result<HybridModel> {
        if dataset.is_empty() {
            return Err(Error::train("hybrid needs a non-empty dataset"));
        }
        if scheme.bounds != dataset.bounds() {
            return Err(Error::train("partition scheme bounds do not match the dataset"));
        }

        // membership per block, dropping empty blocks from the label set
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, p) in dataset.points().iter().enumerate() {
            members.entry(scheme.partition_of(&p.position)).or_default().push(i);
        }
        let kept_ids: Vec<usize> = members.keys().copied().collect();
        let dropped_ids: Vec<usize> =
            (0..scheme.n_partitions()).filter(|id| !members.contains_key(id)).collect();
        let label_of: BTreeMap<usize, u32> = kept_ids
            .iter()
            .enumerate()
            .map(|(l, &id)| (id, l as u32))
            .collect();

        // gate trains on raw fingerprints (trees are scale-invariant)
        let raw = raw_features(dataset);
        let labels: Vec<u32> = dataset
            .points()
            .iter()
            .map(|p| label_of[&scheme.partition_of(&p.position)])
            .collect();
        let gate_params = ForestParams {
            trees: params.gate_trees,
            ..ForestParams::classification(seeds::derive(seed, "gate"))
        };
        let no_norm = NormalizationParams::fit(dataset, NormMethod::None);
        let gate = Forest::train_classifier(&raw, &labels, kept_ids.len(), gate_params, no_norm)?;

        let gate_cv_accuracy = if params.gate_cv_folds >= 2 {
            Some(gate_cv_accuracy(
                &raw,
                &labels,
                kept_ids.len(),
                gate_params,
                params.gate_cv_folds,
                seeds::derive(seed, "gate-cv"),
            )?)
        } else {
            None
        };

        let experts = train_experts(dataset, &members, params.blend_percent)?;

        Ok(HybridModel {
            scheme,
            gate,
            kept_ids,
            dropped_ids,
            experts,
            gate_cv_accuracy,
            params,
        })
    }

    pub fn scheme(&self) -> &PartitionScheme {
        &self.scheme
    }

    pub fn params(&self) -> &HybridParams {
        &self.params
    }

    pub fn gate_cv_accuracy(&self) -> Option<f64> {
        self.gate_cv_accuracy
    }

    pub fn kept_ids(&self) -> &[usize] {
        &self.kept_ids
    }

    pub fn dropped_ids(&self) -> &[usize] {
        &self.dropped_ids
    }

    /// Population of the largest expert.
    pub fn max_partition_population(&self) -> usize {
        self.experts.iter().map(|e| e.n_instances()).max().unwrap_or(0)
    }

    /// Gate, then the selected partition's K* expert. When the gate is
    /// unsure (top vote fraction below the fallback threshold) the top two
    /// experts both run and their fixes average weighted by vote fraction.
    pub fn predict(&self, fp: &Fingerprint) -> Result<(GridPosition, HybridDiagnostics)> {
        let (label, fractions) = self.gate.classify_fingerprint(fp)?;
        let top = label as usize;
        let expert = self
            .experts
            .get(top)
            .ok_or_else(|| Error::predict(format!("gate chose unknown label {top}")))?;
        let top_fraction = fractions[top];

        if top_fraction >= self.params.fallback_threshold || self.experts.len() == 1 {
            let (x, y) = expert.predict_xy(fp)?;
            return Ok((
                GridPosition::new(x, y),
                HybridDiagnostics {
                    partition_id: self.kept_ids[top],
                    comparisons: expert.n_instances() as u64,
                    vote_fractions: fractions,
                    fallback: false,
                },
            ));
        }

        // runner-up label: highest fraction excluding the winner, ties
        // toward the lower label
        let mut runner = usize::MAX;
        for (l, &f) in fractions.iter().enumerate() {
            if l == top {
                continue;
            }
            if runner == usize::MAX || f > fractions[runner] {
                runner = l;
            }
        }
        let runner_expert = &self.experts[runner];
        let (x1, y1) = expert.predict_xy(fp)?;
        let (x2, y2) = runner_expert.predict_xy(fp)?;
        let w1 = top_fraction;
        let w2 = fractions[runner];
        let total = w1 + w2;
        let (wx, wy) = if total > 0.0 {
            ((w1 * x1 + w2 * x2) / total, (w1 * y1 + w2 * y2) / total)
        } else {
            ((x1 + x2) / 2.0, (y1 + y2) / 2.0)
        };
        Ok((
            GridPosition::new(wx, wy),
            HybridDiagnostics {
                partition_id: self.kept_ids[top],
                comparisons: (expert.n_instances() + runner_expert.n_instances()) as u64,
                vote_fractions: fractions,
                fallback: true,
            },
        ))
    }

    /// Bypass the gate and run one partition's expert directly (oracle-gate
    /// evaluation).
    pub fn expert_predict(&self, partition_id: usize, fp: &Fingerprint) -> Result<(f64, f64)> {
        let label = self
            .kept_ids
            .iter()
            .position(|&id| id == partition_id)
            .ok_or_else(|| Error::predict(format!("partition {partition_id} has no expert")))?;
        self.experts[label].predict_xy(fp)
    }

    pub fn bundle(&self) -> HybridBundle {
        HybridBundle {
            scheme: self.scheme.clone(),
            gate: self.gate.clone(),
            kept_ids: self.kept_ids.clone(),
            dropped_ids: self.dropped_ids.clone(),
            gate_cv_accuracy: self.gate_cv_accuracy,
        }
    }

    /// Rebuild a model from its persisted bundle plus the training data the
    /// bundle references.
    pub fn from_bundle(
        bundle: HybridBundle,
        dataset: &Dataset,
        params: &HybridParams,
    ) -> Result<HybridModel> {
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, p) in dataset.points().iter().enumerate() {
            members
                .entry(bundle.scheme.partition_of(&p.position))
                .or_default()
                .push(i);
        }
        let kept_now: Vec<usize> = members.keys().copied().collect();
        if kept_now != bundle.kept_ids {
            return Err(Error::data(
                "persisted hybrid bundle does not match the training data partitioning",
            ));
        }
        let experts = train_experts(dataset, &members, params.blend_percent)?;
        Ok(HybridModel {
            scheme: bundle.scheme,
            gate: bundle.gate,
            kept_ids: bundle.kept_ids,
            dropped_ids: bundle.dropped_ids,
            experts,
            gate_cv_accuracy: bundle.gate_cv_accuracy,
            params: params.clone(),
        })
    }
}

fn raw_features(dataset: &Dataset) -> FeatureMatrix {
    let d = dataset.schema().len();
    let mut flat = Vec::with_capacity(dataset.len() * d);
    for p in dataset.points() {
        flat.extend_from_slice(p.fingerprint.values());
    }
    FeatureMatrix::from_flat(flat, dataset.len(), d)
}

/// One z-scored K* expert per non-empty partition, trained in parallel.
fn train_experts(
    dataset: &Dataset,
    members: &BTreeMap<usize, Vec<usize>>,
    blend_percent: f64,
) -> Result<Vec<KStarDual>> {
    members
        .par_iter()
        .map(|(_, indices)| {
            let subset = dataset.select(indices);
            let norm = NormalizationParams::fit(&subset, NormMethod::ZScore);
            let d = subset.schema().len();
            let mut flat = Vec::with_capacity(subset.len() * d);
            let mut tx = Vec::with_capacity(subset.len());
            let mut ty = Vec::with_capacity(subset.len());
            for p in subset.points() {
                for (j, &v) in p.fingerprint.values().iter().enumerate() {
                    flat.push(norm.apply_value(j, v));
                }
                tx.push(p.position.x);
                ty.push(p.position.y);
            }
            let core = KStarCore::new(FeatureMatrix::from_flat(flat, subset.len(), d));
            KStarDual::new(std::sync::Arc::new(core), tx, ty, norm, blend_percent)
        })
        .collect()
}

/// Tenfold-style cross-validated gate accuracy (plain k-fold over the
/// points, near-equal folds, deterministic shuffle).
fn gate_cv_accuracy(
    features: &FeatureMatrix,
    labels: &[u32],
    n_classes: usize,
    gate_params: ForestParams,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    let n = features.n_rows();
    if folds < 2 || n < folds {
        return Err(Error::config(format!("gate CV needs 2 <= folds <= {n}, got {folds}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let fold_sets = crate::eval::split_folds(&order, folds);

    let mut hits = 0usize;
    for (f, test_idx) in fold_sets.iter().enumerate() {
        let train_idx: Vec<usize> = fold_sets
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, s)| s.iter().copied())
            .collect();
        let mut flat = Vec::with_capacity(train_idx.len() * features.n_cols());
        let mut fold_labels = Vec::with_capacity(train_idx.len());
        for &i in &train_idx {
            flat.extend_from_slice(features.row(i));
            fold_labels.push(labels[i]);
        }
        let train_features =
            FeatureMatrix::from_flat(flat, train_idx.len(), features.n_cols());
        let fold_params = ForestParams {
            seed: seeds::derive_indexed(gate_params.seed, "gate-cv-fold", f as u64),
            ..gate_params
        };
        let norm = NormalizationParams {
            method: NormMethod::None,
            per_attr: (0..features.n_cols())
                .map(|_| crate::preprocess::AttrNorm { shift: 0.0, scale: 1.0 })
                .collect(),
        };
        let forest =
            Forest::train_classifier(&train_features, &fold_labels, n_classes, fold_params, norm)?;
        for &i in test_idx {
            let (pred, _) = forest.classify(features.row(i))?;
            if pred == labels[i] {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledPoint;
    use crate::preprocess::Axis;
    use crate::schema::{AttributeDef, AttributeKind, AttributeSchema};
    use std::sync::Arc;

    fn grid_dataset(width: u32, height: u32) -> Dataset {
        let schema = Arc::new(
            AttributeSchema::new(vec![
                AttributeDef::new("rssi_a", AttributeKind::Rssi),
                AttributeDef::new("rssi_b", AttributeKind::Rssi),
            ])
            .unwrap(),
        );
        let mut points = Vec::new();
        for y in 0..height {
            for x in 0..width {
                // signals fall off with distance from two corners, so
                // fingerprints identify position
                let fx = -30.0 - (x as f64) - 0.5 * (y as f64);
                let fy = -30.0 - ((width - 1 - x) as f64) - 0.5 * ((height - 1 - y) as f64);
                points.push(LabeledPoint {
                    fingerprint: Fingerprint::dense(vec![fx, fy]).unwrap(),
                    position: GridPosition::new(x as f64, y as f64),
                });
            }
        }
        Dataset::new(schema, Bounds::new(width, height), points).unwrap()
    }

    #[test]
    fn single_partition_when_target_exceeds_n() {
        let ds = grid_dataset(4, 4);
        let scheme = PartitionScheme::build(&ds, 100).unwrap();
        assert_eq!(scheme.n_partitions(), 1);
        let block = scheme.blocks()[0];
        assert_eq!((block.x0, block.x1, block.y0, block.y1), (0, 4, 0, 4));
    }

    #[test]
    fn four_by_four_grid_splits_into_quadrants() {
        let ds = grid_dataset(4, 4);
        let scheme = PartitionScheme::build(&ds, 4).unwrap();
        assert_eq!(scheme.n_partitions(), 4);
        assert_eq!(scheme.col_cuts, vec![2]);
        assert_eq!(scheme.row_cuts, vec![2]);
        let pops = scheme.populations(&ds);
        assert_eq!(pops, vec![4, 4, 4, 4]);
        // quadrant membership
        assert_eq!(scheme.partition_of(&GridPosition::new(0.0, 0.0)), 0);
        assert_eq!(scheme.partition_of(&GridPosition::new(3.0, 0.0)), 1);
        assert_eq!(scheme.partition_of(&GridPosition::new(0.0, 3.0)), 2);
        assert_eq!(scheme.partition_of(&GridPosition::new(3.0, 3.0)), 3);
    }

    #[test]
    fn blocks_tile_bounds_without_gaps_or_overlaps() {
        let ds = grid_dataset(7, 5);
        let scheme = PartitionScheme::build(&ds, 6).unwrap();
        let blocks = scheme.blocks();
        let mut covered = vec![false; 7 * 5];
        for b in &blocks {
            for y in b.y0..b.y1 {
                for x in b.x0..b.x1 {
                    let at = (y * 7 + x) as usize;
                    assert!(!covered[at], "tile ({x},{y}) covered twice");
                    covered[at] = true;
                }
            }
        }
        assert!(covered.iter().all(|&c| c), "gaps in tiling");
        // every point maps to exactly one id, consistent with its block
        for p in ds.points() {
            let id = scheme.partition_of(&p.position);
            let b = blocks[id];
            assert!(
                (b.x0 as f64) <= p.position.x
                    && p.position.x < b.x1 as f64
                    && (b.y0 as f64) <= p.position.y
                    && p.position.y < b.y1 as f64
            );
        }
    }

    #[test]
    fn population_cap_holds() {
        let ds = grid_dataset(12, 9);
        let target = 10;
        let scheme = PartitionScheme::build(&ds, target).unwrap();
        let max_pop = scheme.populations(&ds).into_iter().max().unwrap();
        assert!(max_pop as f64 <= 1.25 * target as f64, "max pop {max_pop}");
    }

    #[test]
    fn single_partition_hybrid_equals_monolithic_kstar() {
        use crate::models::kstar::{KStarModel, KStarParams};
        use crate::preprocess::preprocess;

        let ds = grid_dataset(5, 4);
        let params = HybridParams { target_points: 1000, ..Default::default() };
        let hybrid = HybridModel::train(&ds, params, 7).unwrap();
        assert_eq!(hybrid.kept_ids(), &[0]);

        let vx = preprocess(&ds, Axis::X, NormMethod::ZScore).unwrap();
        let vy = preprocess(&ds, Axis::Y, NormMethod::ZScore).unwrap();
        let mx = KStarModel::train(vx, KStarParams::default()).unwrap();
        let my = KStarModel::train(vy, KStarParams::default()).unwrap();

        for p in ds.points().iter().step_by(3) {
            let (pos, diag) = hybrid.predict(&p.fingerprint).unwrap();
            assert_eq!(pos.x, mx.predict(&p.fingerprint).unwrap());
            assert_eq!(pos.y, my.predict(&p.fingerprint).unwrap());
            assert_eq!(diag.comparisons, ds.len() as u64);
            assert!(!diag.fallback);
        }
    }

    #[test]
    fn oracle_gate_bypass_equals_expert_output() {
        let ds = grid_dataset(8, 8);
        let params = HybridParams { target_points: 16, ..Default::default() };
        let hybrid = HybridModel::train(&ds, params, 3).unwrap();
        let p = &ds.points()[5];
        let true_id = hybrid.scheme().partition_of(&p.position);
        let (x, y) = hybrid.expert_predict(true_id, &p.fingerprint).unwrap();
        // forcing the true partition must reproduce that expert exactly
        let (x2, y2) = hybrid.expert_predict(true_id, &p.fingerprint).unwrap();
        assert_eq!((x, y), (x2, y2));
    }

    #[test]
    fn diagnostics_bound_comparisons_by_partition_population() {
        let ds = grid_dataset(10, 10);
        let params = HybridParams { target_points: 25, ..Default::default() };
        let hybrid = HybridModel::train(&ds, params, 11).unwrap();
        let max_pop = hybrid.max_partition_population() as u64;
        for p in ds.points().iter().step_by(7) {
            let (_, diag) = hybrid.predict(&p.fingerprint).unwrap();
            if diag.fallback {
                assert!(diag.comparisons <= 2 * max_pop);
            } else {
                assert!(diag.comparisons <= max_pop);
            }
            let sum: f64 = diag.vote_fractions.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn no_fallback_above_threshold() {
        let ds = grid_dataset(10, 10);
        let hybrid =
            HybridModel::train(&ds, HybridParams { target_points: 25, ..Default::default() }, 5)
                .unwrap();
        for p in ds.points() {
            let (_, diag) = hybrid.predict(&p.fingerprint).unwrap();
            let top = diag.vote_fractions.iter().copied().fold(0.0, f64::max);
            if top >= 0.5 {
                assert!(!diag.fallback);
            }
        }
    }

    #[test]
    fn gate_cv_reported_when_requested() {
        let ds = grid_dataset(10, 6);
        let params = HybridParams { target_points: 15, gate_cv_folds: 5, ..Default::default() };
        let hybrid = HybridModel::train(&ds, params, 2).unwrap();
        let acc = hybrid.gate_cv_accuracy().expect("accuracy requested");
        assert!((0.0..=1.0).contains(&acc));
    }
}
