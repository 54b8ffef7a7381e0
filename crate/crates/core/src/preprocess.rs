//! Leak-removal preprocessing and column normalization.
//!
//! Training for one axis must not see the other axis: the feature view
//! exposes only the sensor attributes plus the chosen target, never the
//! opposite coordinate (it is unknown in a live deployment). Normalization
//! is fitted per column; distance-based learners and the RBF net get
//! z-score by default, trees get none.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Fingerprint};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Which grid coordinate a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn opposite(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            other => Err(Error::config(format!("unknown axis {other:?}, expected x or y"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    ZScore,
    MinMax,
    None,
}

/// Per-attribute affine transform `(v - shift) / scale`, with the method
/// tag that produced it. Scale is always strictly positive: degenerate
/// (constant) columns record scale 1 and normalize to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub method: NormMethod,
    pub per_attr: Vec<AttrNorm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrNorm {
    pub shift: f64,
    pub scale: f64,
}

impl NormalizationParams {
    /// Fit normalization over the dataset's fingerprint columns.
    pub fn fit(dataset: &Dataset, method: NormMethod) -> Self {
        let d = dataset.schema().len();
        let n = dataset.len() as f64;
        let mut per_attr = Vec::with_capacity(d);
        for j in 0..d {
            let params = match method {
                NormMethod::None => AttrNorm { shift: 0.0, scale: 1.0 },
                NormMethod::ZScore => {
                    let mean = dataset.points().iter().map(|p| p.fingerprint.value(j)).sum::<f64>() / n;
                    let var = dataset
                        .points()
                        .iter()
                        .map(|p| {
                            let dlt = p.fingerprint.value(j) - mean;
                            dlt * dlt
                        })
                        .sum::<f64>()
                        / n;
                    let sd = var.sqrt();
                    AttrNorm {
                        shift: mean,
                        scale: if sd > 0.0 && sd.is_finite() { sd } else { 1.0 },
                    }
                }
                NormMethod::MinMax => {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for p in dataset.points() {
                        let v = p.fingerprint.value(j);
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                    let span = hi - lo;
                    AttrNorm {
                        shift: lo,
                        scale: if span > 0.0 && span.is_finite() { span } else { 1.0 },
                    }
                }
            };
            per_attr.push(params);
        }
        NormalizationParams { method, per_attr }
    }

    pub fn apply_value(&self, attr: usize, v: f64) -> f64 {
        let p = &self.per_attr[attr];
        (v - p.shift) / p.scale
    }

    /// Normalize a whole fingerprint into a fresh feature vector.
    pub fn apply(&self, fp: &Fingerprint) -> Result<Vec<f64>> {
        if fp.len() != self.per_attr.len() {
            return Err(Error::data(format!(
                "fingerprint length {} does not match normalization width {}",
                fp.len(),
                self.per_attr.len()
            )));
        }
        Ok(fp
            .values()
            .iter()
            .enumerate()
            .map(|(j, &v)| self.apply_value(j, v))
            .collect())
    }
}

/// Normalized features plus the targets for one axis; the training view
/// consumed by every per-axis learner. The opposite coordinate is not
/// present anywhere in it.
#[derive(Debug, Clone)]
pub struct FeatureView {
    pub features: FeatureMatrix,
    pub targets: Vec<f64>,
    pub axis: Axis,
    pub norm: NormalizationParams,
}

impl FeatureView {
    pub fn n_points(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }
}

/// Build the leak-free training view for `axis`: sensor attributes
/// normalized by `method`, targets taken from the chosen coordinate.
/// The input dataset is left untouched.
pub fn preprocess(dataset: &Dataset, axis: Axis, method: NormMethod) -> Result<FeatureView> {
    if dataset.is_empty() {
        return Err(Error::data("cannot preprocess an empty dataset"));
    }
    let norm = NormalizationParams::fit(dataset, method);
    let d = dataset.schema().len();
    let mut flat = Vec::with_capacity(dataset.len() * d);
    let mut targets = Vec::with_capacity(dataset.len());
    for p in dataset.points() {
        for (j, &v) in p.fingerprint.values().iter().enumerate() {
            flat.push(norm.apply_value(j, v));
        }
        targets.push(match axis {
            Axis::X => p.position.x,
            Axis::Y => p.position.y,
        });
    }
    Ok(FeatureView {
        features: FeatureMatrix::from_flat(flat, dataset.len(), d),
        targets,
        axis,
        norm,
    })
}
