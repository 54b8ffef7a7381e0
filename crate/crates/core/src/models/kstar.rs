//! K* instance-based regression.
//!
//! Similarity between a query and a training instance is an exponential
//! transformation kernel per attribute, `p_i = (1/(2*x0)) * exp(-|d_i|/x0)`,
//! whose scale `x0` is solved per attribute per query so that the effective
//! number of influential instances,
//! `n_eff(x0) = (sum p)^2 / (sum p^2)`,
//! hits the blend target `n_target = 1 + (blend/100) * (N - 1)`. Blend 0 is
//! the nearest-instance limit; blend 100 weights every instance uniformly.
//! Per-instance kernels multiply across attributes (sum in log space) and
//! the prediction is the weight-normalized mean of training targets.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Fingerprint;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::preprocess::{Axis, FeatureView, NormalizationParams};

/// Bisection bracket for the kernel scale. Absolute bounds: at the low end
/// every positive gap underflows the kernel to zero (the nearest-instance
/// limit), at the high end all kernels round to one (uniform weighting).
const X0_LO: f64 = 1e-18;
const X0_HI: f64 = 1e18;
const MAX_BISECT_ITERS: usize = 64;
const N_EFF_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KStarParams {
    /// Blend percentage in [0, 100]. Default 20.
    pub blend_percent: f64,
}

impl Default for KStarParams {
    fn default() -> Self {
        KStarParams { blend_percent: 20.0 }
    }
}

/// Result of solving the kernel scale for one delta profile.
#[derive(Debug, Clone)]
pub struct ScaleSolution {
    pub x0: f64,
    /// Per-instance kernel weights normalized to sum 1.
    pub weights: Vec<f64>,
    /// Effective instance count at the returned scale.
    pub n_eff: f64,
    pub n_target: f64,
    /// All deltas equal: `n_eff` is N for every scale, weights are uniform.
    pub degenerate: bool,
}

/// Solve the kernel scale for one attribute's absolute deltas.
pub fn solve_scale(abs_deltas: &[f64], blend_percent: f64) -> Result<ScaleSolution> {
    if abs_deltas.is_empty() {
        return Err(Error::predict("scale solve needs at least one delta"));
    }
    if !(0.0..=100.0).contains(&blend_percent) {
        return Err(Error::config(format!(
            "blend must lie in [0, 100], got {blend_percent}"
        )));
    }
    for &d in abs_deltas {
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::predict(format!("deltas must be finite and non-negative, got {d}")));
        }
    }
    let n = abs_deltas.len();
    let min = abs_deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let max = abs_deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_target = blend_target(n, blend_percent);

    if max == min {
        return Ok(ScaleSolution {
            x0: f64::INFINITY,
            weights: vec![1.0 / n as f64; n],
            n_eff: n as f64,
            n_target,
            degenerate: true,
        });
    }

    let mut groups = group_gaps_from_unsorted(abs_deltas, min);
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (x0, n_eff) = solve_x0_grouped(&groups, n_target);

    // normalized weights: ratios exp(-gap/x0) are stable (gap 0 maps to 1)
    let inv = 1.0 / x0;
    let mut weights: Vec<f64> = abs_deltas.iter().map(|&d| (-(d - min) * inv).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(ScaleSolution {
        x0,
        weights,
        n_eff,
        n_target,
        degenerate: false,
    })
}

fn blend_target(n: usize, blend_percent: f64) -> f64 {
    1.0 + (blend_percent / 100.0) * (n as f64 - 1.0)
}

/// Gather (gap, count) groups where gap = delta - min. Exact duplicate
/// deltas collapse into one kernel evaluation.
fn group_gaps_from_unsorted(abs_deltas: &[f64], min: f64) -> Vec<(f64, f64)> {
    let mut sorted: Vec<f64> = abs_deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    group_sorted_gaps(&sorted, min)
}

fn group_sorted_gaps(sorted_deltas: &[f64], min: f64) -> Vec<(f64, f64)> {
    let mut groups: Vec<(f64, f64)> = Vec::new();
    for &d in sorted_deltas {
        let gap = d - min;
        match groups.last_mut() {
            Some((g, c)) if *g == gap => *c += 1.0,
            _ => groups.push((gap, 1.0)),
        }
    }
    groups
}

/// Effective count in ratio form: q = exp(-gap/x0), n_eff = (sum q)^2/(sum q^2).
/// The gap-0 group keeps the sums strictly positive at any scale.
fn n_eff_grouped(groups: &[(f64, f64)], inv_x0: f64) -> f64 {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &(gap, count) in groups {
        let q = (-gap * inv_x0).exp();
        s1 += count * q;
        s2 += count * q * q;
    }
    s1 * s1 / s2
}

/// Bisect for x0 with n_eff(x0) = n_target. n_eff is monotone non-decreasing
/// in x0; out-of-range targets clamp to the bracket ends.
fn solve_x0_grouped(groups: &[(f64, f64)], n_target: f64) -> (f64, f64) {
    let mut lo = X0_LO;
    let mut hi = X0_HI;
    let n_lo = n_eff_grouped(groups, 1.0 / lo);
    if n_target <= n_lo {
        return (lo, n_lo);
    }
    let n_hi = n_eff_grouped(groups, 1.0 / hi);
    if n_target >= n_hi {
        return (hi, n_hi);
    }
    let mut mid = (lo.ln() + hi.ln()) / 2.0;
    let mut x0 = mid.exp();
    let mut n_mid = n_eff_grouped(groups, 1.0 / x0);
    for _ in 0..MAX_BISECT_ITERS {
        if (n_mid - n_target).abs() <= N_EFF_REL_TOL * n_target {
            break;
        }
        if n_mid < n_target {
            lo = x0;
        } else {
            hi = x0;
        }
        mid = (lo.ln() + hi.ln()) / 2.0;
        x0 = mid.exp();
        n_mid = n_eff_grouped(groups, 1.0 / x0);
    }
    (x0, n_mid)
}

/// Shared K* machinery: the normalized training features plus per-column
/// sorted copies so each query can group its delta profile in O(N).
#[derive(Debug)]
pub struct KStarCore {
    features: FeatureMatrix,
    sorted_cols: Vec<Vec<f64>>,
}

impl KStarCore {
    pub fn new(features: FeatureMatrix) -> Self {
        let sorted_cols = (0..features.n_cols())
            .map(|j| {
                let mut col = features.column(j);
                col.sort_by(f64::total_cmp);
                col
            })
            .collect();
        KStarCore { features, sorted_cols }
    }

    pub fn n_instances(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_attributes(&self) -> usize {
        self.features.n_cols()
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    /// Sorted absolute deltas between `q` and column `j`, produced by
    /// merging outward from the insertion point of the presorted column.
    fn sorted_abs_deltas(&self, j: usize, q: f64, out: &mut Vec<f64>) {
        let col = &self.sorted_cols[j];
        out.clear();
        let split = col.partition_point(|&v| v < q);
        let mut left = split; // walk down: deltas q - col[left-1]
        let mut right = split; // walk up: deltas col[right] - q
        while left > 0 || right < col.len() {
            let dl = if left > 0 { q - col[left - 1] } else { f64::INFINITY };
            let dr = if right < col.len() { col[right] - q } else { f64::INFINITY };
            if dl <= dr {
                out.push(dl);
                left -= 1;
            } else {
                out.push(dr);
                right += 1;
            }
        }
    }

    /// Per-instance weights (normalized to sum 1) for a normalized query.
    ///
    /// Blend 0 is evaluated in its exact limit: uniform weight over the
    /// instances at minimal L1 distance (tie-averaged 1-NN). Attributes
    /// whose delta profile is constant contribute the same factor to every
    /// instance and are skipped.
    pub fn normalized_weights(&self, query: &[f64], blend_percent: f64) -> Result<Vec<f64>> {
        let n = self.n_instances();
        let d = self.n_attributes();
        if n == 0 {
            return Err(Error::predict("empty K* model"));
        }
        if query.len() != d {
            return Err(Error::predict(format!(
                "query has {} attributes, model expects {d}",
                query.len()
            )));
        }
        if !(0.0..=100.0).contains(&blend_percent) {
            return Err(Error::config(format!(
                "blend must lie in [0, 100], got {blend_percent}"
            )));
        }

        if blend_percent == 0.0 {
            return Ok(self.nearest_limit_weights(query));
        }

        let n_target = blend_target(n, blend_percent);
        let mut inv_x0 = vec![0.0f64; d];
        let mut deltas = Vec::with_capacity(n);
        for j in 0..d {
            self.sorted_abs_deltas(j, query[j], &mut deltas);
            let min = deltas[0];
            let max = deltas[n - 1];
            if max == min {
                continue; // degenerate attribute: constant factor, cancels
            }
            let groups = group_sorted_gaps(&deltas, min);
            let (x0, _) = solve_x0_grouped(&groups, n_target);
            inv_x0[j] = 1.0 / x0;
        }

        // log-kernel accumulation per instance; per-attribute constants
        // (-|min|/x0 - ln(2 x0)) shift every instance equally and cancel
        // under normalization, so only gap terms are accumulated.
        let mut log_w = vec![0.0f64; n];
        for (i, lw) in log_w.iter_mut().enumerate() {
            let row = self.features.row(i);
            let mut acc = 0.0;
            for j in 0..d {
                acc -= (row[j] - query[j]).abs() * inv_x0[j];
            }
            *lw = acc;
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = log_w.iter().map(|&lw| (lw - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::predict("K* weight normalization failed"));
        }
        for w in &mut weights {
            *w /= total;
        }
        Ok(weights)
    }

    /// Blend-0 limit: the instances at minimal L1 distance from the query,
    /// in ascending index order. Constant-delta attributes contribute the
    /// same amount to every instance and are skipped.
    pub fn nearest_ties(&self, query: &[f64]) -> Vec<usize> {
        let n = self.n_instances();
        let d = self.n_attributes();
        let mut varying = Vec::with_capacity(d);
        for j in 0..d {
            let first = (self.features.get(0, j) - query[j]).abs();
            if (0..n).any(|i| (self.features.get(i, j) - query[j]).abs() != first) {
                varying.push(j);
            }
        }
        let mut dist = vec![0.0f64; n];
        for (i, dst) in dist.iter_mut().enumerate() {
            let row = self.features.row(i);
            *dst = varying.iter().map(|&j| (row[j] - query[j]).abs()).sum();
        }
        let min = dist.iter().copied().fold(f64::INFINITY, f64::min);
        (0..n).filter(|&i| dist[i] == min).collect()
    }

    /// Exact blend-0 limit as a weight vector: uniform mass on the
    /// minimal-L1-distance set.
    fn nearest_limit_weights(&self, query: &[f64]) -> Vec<f64> {
        let ties = self.nearest_ties(query);
        let w = 1.0 / ties.len() as f64;
        let mut weights = vec![0.0f64; self.n_instances()];
        for i in ties {
            weights[i] = w;
        }
        weights
    }
}

/// Plain mean of the targets at `indices`, accumulated in index order.
fn tie_mean(indices: &[usize], targets: &[f64]) -> f64 {
    let s: f64 = indices.iter().map(|&i| targets[i]).sum();
    s / indices.len() as f64
}

/// Weighted mean of targets under a weight simplex, clamped into the
/// convex hull of the targets.
fn weighted_target(weights: &[f64], targets: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut total = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&w, &y) in weights.iter().zip(targets) {
        acc += w * y;
        total += w;
        lo = lo.min(y);
        hi = hi.max(y);
    }
    (acc / total).clamp(lo, hi)
}

/// K* model for one target axis. Immutable after training; predict is pure.
#[derive(Debug, Clone)]
pub struct KStarModel {
    core: Arc<KStarCore>,
    targets: Vec<f64>,
    axis: Axis,
    norm: NormalizationParams,
    blend_percent: f64,
}

impl KStarModel {
    pub fn train(view: FeatureView, params: KStarParams) -> Result<Self> {
        if view.n_points() == 0 {
            return Err(Error::train("K* needs a non-empty training view"));
        }
        if !(0.0..=100.0).contains(&params.blend_percent) {
            return Err(Error::train(format!(
                "blend must lie in [0, 100], got {}",
                params.blend_percent
            )));
        }
        Ok(KStarModel {
            core: Arc::new(KStarCore::new(view.features)),
            targets: view.targets,
            axis: view.axis,
            norm: view.norm,
            blend_percent: params.blend_percent,
        })
    }

    /// Rebuild a model around an existing core (used by the hybrid experts
    /// so per-axis models share one feature matrix).
    pub fn from_core(
        core: Arc<KStarCore>,
        targets: Vec<f64>,
        axis: Axis,
        norm: NormalizationParams,
        blend_percent: f64,
    ) -> Result<Self> {
        if core.n_instances() == 0 || core.n_instances() != targets.len() {
            return Err(Error::train("K* core/target size mismatch"));
        }
        Ok(KStarModel { core, targets, axis, norm, blend_percent })
    }

    pub fn core(&self) -> &Arc<KStarCore> {
        &self.core
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn blend_percent(&self) -> f64 {
        self.blend_percent
    }

    pub fn norm(&self) -> &NormalizationParams {
        &self.norm
    }

    pub fn n_instances(&self) -> usize {
        self.core.n_instances()
    }

    /// Predict from an already-normalized feature vector.
    pub fn predict_normalized(&self, query: &[f64]) -> Result<f64> {
        if self.core.n_instances() == 0 {
            return Err(Error::predict("empty K* model"));
        }
        if self.blend_percent == 0.0 {
            // exact nearest-instance limit
            let ties = self.core.nearest_ties(query);
            return Ok(tie_mean(&ties, &self.targets));
        }
        let weights = self.core.normalized_weights(query, self.blend_percent)?;
        Ok(weighted_target(&weights, &self.targets))
    }

    /// Predict from a raw fingerprint; applies the stored normalization.
    pub fn predict(&self, fp: &Fingerprint) -> Result<f64> {
        let q = self.norm.apply(fp)?;
        self.predict_normalized(&q)
    }
}

/// K* expert predicting both axes from one weight pass. Produces exactly the
/// same values as two per-axis models built over the same core.
#[derive(Debug, Clone)]
pub struct KStarDual {
    core: Arc<KStarCore>,
    targets_x: Vec<f64>,
    targets_y: Vec<f64>,
    norm: NormalizationParams,
    blend_percent: f64,
}

impl KStarDual {
    pub fn new(
        core: Arc<KStarCore>,
        targets_x: Vec<f64>,
        targets_y: Vec<f64>,
        norm: NormalizationParams,
        blend_percent: f64,
    ) -> Result<Self> {
        if core.n_instances() == 0
            || core.n_instances() != targets_x.len()
            || core.n_instances() != targets_y.len()
        {
            return Err(Error::train("K* dual core/target size mismatch"));
        }
        Ok(KStarDual { core, targets_x, targets_y, norm, blend_percent })
    }

    pub fn n_instances(&self) -> usize {
        self.core.n_instances()
    }

    pub fn predict_xy_normalized(&self, query: &[f64]) -> Result<(f64, f64)> {
        if self.blend_percent == 0.0 {
            let ties = self.core.nearest_ties(query);
            return Ok((tie_mean(&ties, &self.targets_x), tie_mean(&ties, &self.targets_y)));
        }
        let weights = self.core.normalized_weights(query, self.blend_percent)?;
        Ok((
            weighted_target(&weights, &self.targets_x),
            weighted_target(&weights, &self.targets_y),
        ))
    }

    pub fn predict_xy(&self, fp: &Fingerprint) -> Result<(f64, f64)> {
        let q = self.norm.apply(fp)?;
        self.predict_xy_normalized(&q)
    }

    pub fn norm(&self) -> &NormalizationParams {
        &self.norm
    }
}

// ── test-only brute-force oracle ────────────────────────────────────────────

/// Independent oracle: grid-search the kernel scale over 1e-6..1e6 with
/// `samples` log-spaced points, then evaluate the full formula directly.
/// Slow by construction; test code only.
#[doc(hidden)]
pub mod oracle {
    use super::blend_target;

    pub const GRID_LO: f64 = 1e-6;
    pub const GRID_HI: f64 = 1e6;
    pub const GRID_SAMPLES: usize = 1_000_000;

    fn n_eff_direct(abs_deltas: &[f64], x0: f64) -> f64 {
        // ratio form of (sum p)^2 / (sum p^2); algebraically identical
        let min = abs_deltas.iter().copied().fold(f64::INFINITY, f64::min);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for &d in abs_deltas {
            let q = (-(d - min) / x0).exp();
            s1 += q;
            s2 += q * q;
        }
        s1 * s1 / s2
    }

    /// Scan the log-spaced grid for the sample whose n_eff lands closest to
    /// the blend target. n_eff is monotone in x0, so |n_eff - target| is
    /// unimodal over the grid: the scan walks in from whichever end sits
    /// nearer the crossing and stops once clearly past it, visiting the
    /// same minimizer a full sweep would. Float wobble on the saturation
    /// plateaus never sustains a long worsening streak, so the early exit
    /// only fires beyond the true crossing.
    pub fn grid_search_x0(abs_deltas: &[f64], blend_percent: f64) -> f64 {
        let n_target = blend_target(abs_deltas.len(), blend_percent);
        let step = (GRID_HI / GRID_LO).powf(1.0 / (GRID_SAMPLES as f64 - 1.0));
        let mid = (GRID_LO * GRID_HI).sqrt();
        let from_low = n_target <= n_eff_direct(abs_deltas, mid);
        let (mut x0, ratio) = if from_low { (GRID_LO, step) } else { (GRID_HI, 1.0 / step) };
        let mut best_x0 = x0;
        let mut best_err = f64::INFINITY;
        let mut worse_streak = 0u32;
        for _ in 0..GRID_SAMPLES {
            let err = (n_eff_direct(abs_deltas, x0) - n_target).abs();
            if err < best_err {
                best_err = err;
                best_x0 = x0;
                worse_streak = 0;
            } else if err > best_err {
                worse_streak += 1;
                if worse_streak > 1000 {
                    break;
                }
            } else {
                worse_streak = 0;
            }
            x0 *= ratio;
        }
        best_x0
    }

    /// Full-formula K* prediction with grid-searched scales.
    pub fn predict(
        features: &crate::matrix::FeatureMatrix,
        targets: &[f64],
        query: &[f64],
        blend_percent: f64,
    ) -> f64 {
        let n = features.n_rows();
        let d = features.n_cols();
        let mut log_w = vec![0.0f64; n];
        for j in 0..d {
            let deltas: Vec<f64> = (0..n).map(|i| (features.get(i, j) - query[j]).abs()).collect();
            let lo = deltas.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                continue;
            }
            let x0 = grid_search_x0(&deltas, blend_percent);
            for (i, &dlt) in deltas.iter().enumerate() {
                log_w[i] -= dlt / x0;
            }
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &lw) in log_w.iter().enumerate() {
            let w = (lw - max).exp();
            num += w * targets[i];
            den += w;
        }
        num / den
    }

    /// Tie-averaged 1-NN in L1 over non-constant attributes: the blend-0
    /// limit of the K* formula.
    pub fn nearest_limit(
        features: &crate::matrix::FeatureMatrix,
        targets: &[f64],
        query: &[f64],
    ) -> f64 {
        let n = features.n_rows();
        let d = features.n_cols();
        let mut varying = Vec::new();
        for j in 0..d {
            let first = (features.get(0, j) - query[j]).abs();
            if (0..n).any(|i| (features.get(i, j) - query[j]).abs() != first) {
                varying.push(j);
            }
        }
        let dist: Vec<f64> = (0..n)
            .map(|i| {
                varying
                    .iter()
                    .map(|&j| (features.get(i, j) - query[j]).abs())
                    .sum::<f64>()
            })
            .collect();
        let min = dist.iter().copied().fold(f64::INFINITY, f64::min);
        let ties: Vec<usize> = (0..n).filter(|&i| dist[i] == min).collect();
        let mut acc = 0.0;
        for &i in &ties {
            acc += targets[i];
        }
        acc / ties.len() as f64
    }
}
