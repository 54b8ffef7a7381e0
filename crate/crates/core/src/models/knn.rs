//! Weighted k-nearest-neighbor regression in normalized signal space.

use serde::{Deserialize, Serialize};

use crate::dataset::Fingerprint;
use crate::error::{Error, Result};
use crate::matrix::{distance, FeatureMatrix};
use crate::preprocess::{Axis, FeatureView, NormalizationParams};

/// Guard against division by zero in inverse-distance weighting.
const DISTANCE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnnWeighting {
    Uniform,
    InverseDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    pub weighting: KnnWeighting,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5, weighting: KnnWeighting::InverseDistance }
    }
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    features: FeatureMatrix,
    targets: Vec<f64>,
    axis: Axis,
    norm: NormalizationParams,
    params: KnnParams,
}

impl KnnModel {
    pub fn train(view: FeatureView, params: KnnParams) -> Result<Self> {
        let n = view.n_points();
        if n == 0 {
            return Err(Error::train("kNN needs a non-empty training view"));
        }
        if params.k < 1 || params.k > n {
            return Err(Error::train(format!(
                "k must lie in 1..={n}, got {}",
                params.k
            )));
        }
        Ok(KnnModel {
            features: view.features,
            targets: view.targets,
            axis: view.axis,
            norm: view.norm,
            params,
        })
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn params(&self) -> KnnParams {
        self.params
    }

    pub fn n_instances(&self) -> usize {
        self.features.n_rows()
    }

    pub fn norm(&self) -> &NormalizationParams {
        &self.norm
    }

    pub fn predict_normalized(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.features.n_cols() {
            return Err(Error::predict(format!(
                "query has {} attributes, model expects {}",
                query.len(),
                self.features.n_cols()
            )));
        }
        // ties broken by lower training index: sort key (distance, index)
        let mut order: Vec<(f64, usize)> = (0..self.features.n_rows())
            .map(|i| (distance(self.features.row(i), query), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let neighbors = &order[..self.params.k];

        let mut num = 0.0;
        let mut den = 0.0;
        for &(d, i) in neighbors {
            let w = match self.params.weighting {
                KnnWeighting::Uniform => 1.0,
                KnnWeighting::InverseDistance => 1.0 / (d + DISTANCE_EPS),
            };
            num += w * self.targets[i];
            den += w;
        }
        Ok(num / den)
    }

    pub fn predict(&self, fp: &Fingerprint) -> Result<f64> {
        let q = self.norm.apply(fp)?;
        self.predict_normalized(&q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{AttrNorm, NormMethod};

    fn view(points: &[(f64, f64)]) -> FeatureView {
        FeatureView {
            features: FeatureMatrix::from_rows(points.iter().map(|&(v, _)| vec![v]).collect()),
            targets: points.iter().map(|&(_, y)| y).collect(),
            axis: Axis::X,
            norm: NormalizationParams {
                method: NormMethod::None,
                per_attr: vec![AttrNorm { shift: 0.0, scale: 1.0 }],
            },
        }
    }

    #[test]
    fn k1_at_training_point_returns_its_target() {
        let m = KnnModel::train(
            view(&[(0.0, 5.0), (1.0, 7.0), (2.0, 9.0)]),
            KnnParams { k: 1, weighting: KnnWeighting::InverseDistance },
        )
        .unwrap();
        assert_eq!(m.predict_normalized(&[1.0]).unwrap(), 7.0);
    }

    #[test]
    fn k_equals_n_uniform_is_target_mean() {
        let m = KnnModel::train(
            view(&[(0.0, 1.0), (10.0, 2.0), (20.0, 3.0)]),
            KnnParams { k: 3, weighting: KnnWeighting::Uniform },
        )
        .unwrap();
        assert!((m.predict_normalized(&[4.2]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_distance_weighting_hand_case() {
        // targets {0, 10} at distances {1, 3}: (0/1 + 10/3)/(1/1 + 1/3) = 2.5
        let m = KnnModel::train(
            view(&[(1.0, 0.0), (-3.0, 10.0)]),
            KnnParams { k: 2, weighting: KnnWeighting::InverseDistance },
        )
        .unwrap();
        let p = m.predict_normalized(&[0.0]).unwrap();
        assert!((p - 2.5).abs() < 1e-8, "{p}");
    }

    #[test]
    fn tie_broken_by_lower_index() {
        // both instances at distance 1; k=1 must pick index 0
        let m = KnnModel::train(
            view(&[(1.0, 100.0), (-1.0, -100.0)]),
            KnnParams { k: 1, weighting: KnnWeighting::Uniform },
        )
        .unwrap();
        assert_eq!(m.predict_normalized(&[0.0]).unwrap(), 100.0);
    }

    #[test]
    fn k_larger_than_n_is_rejected() {
        assert!(KnnModel::train(
            view(&[(0.0, 1.0)]),
            KnnParams { k: 2, weighting: KnnWeighting::Uniform }
        )
        .is_err());
    }
}
