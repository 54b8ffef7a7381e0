//! Model families, the position-model umbrella used by the evaluation
//! harness, and versioned persistence.

pub mod forest;
pub mod knn;
pub mod kstar;
pub mod linear;
pub mod rbf;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Fingerprint};
use crate::error::{Error, Result};
use crate::hybrid::{HybridModel, HybridParams};
use crate::preprocess::{preprocess, Axis, NormMethod};
use crate::seeds;

use forest::{Forest, ForestParams};
use knn::{KnnModel, KnnParams, KnnWeighting};
use kstar::{KStarModel, KStarParams};
use linear::{LinearModel, ZeroRModel};
use rbf::{RbfModel, RbfParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// What to train. Seeds are injected at training time so the same spec can
/// run under many derived streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "kebab-case")]
pub enum LearnerSpec {
    KStar { blend: f64 },
    Knn { k: usize, weighting: KnnWeighting },
    Rbf { centers: usize, max_iters: usize, tol: f64 },
    Linear,
    ZeroR,
    Forest { trees: usize, min_leaf: usize },
    Vote { members: Vec<LearnerSpec> },
    Hybrid { target_points: usize, trees: usize, blend: f64, gate_cv_folds: usize },
}

impl LearnerSpec {
    pub fn kstar_default() -> Self {
        LearnerSpec::KStar { blend: KStarParams::default().blend_percent }
    }

    /// Normalization each family trains under: z-score for distance-based
    /// learners and the RBF net, none for trees and the baselines.
    pub fn norm_method(&self) -> NormMethod {
        match self {
            LearnerSpec::KStar { .. }
            | LearnerSpec::Knn { .. }
            | LearnerSpec::Rbf { .. }
            | LearnerSpec::Linear => NormMethod::ZScore,
            LearnerSpec::ZeroR | LearnerSpec::Forest { .. } => NormMethod::None,
            LearnerSpec::Vote { .. } | LearnerSpec::Hybrid { .. } => NormMethod::None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            LearnerSpec::KStar { .. } => "kstar".into(),
            LearnerSpec::Knn { .. } => "knn".into(),
            LearnerSpec::Rbf { .. } => "rbf".into(),
            LearnerSpec::Linear => "linear".into(),
            LearnerSpec::ZeroR => "zeror".into(),
            LearnerSpec::Forest { .. } => "forest".into(),
            LearnerSpec::Vote { members } => {
                let parts: Vec<String> = members.iter().map(|m| m.name()).collect();
                format!("vote:{}", parts.join("+"))
            }
            LearnerSpec::Hybrid { .. } => "hybrid".into(),
        }
    }

    /// Parse a CLI learner name: `kstar`, `knn`, `rbf`, `linear`, `zeror`,
    /// `forest`, `hybrid`, or `vote:<a>+<b>+...`.
    pub fn parse(name: &str) -> Result<Self> {
        if let Some(rest) = name.strip_prefix("vote:") {
            let members = rest
                .split('+')
                .map(LearnerSpec::parse)
                .collect::<Result<Vec<_>>>()?;
            if members.is_empty() {
                return Err(Error::config("vote needs at least one member"));
            }
            return Ok(LearnerSpec::Vote { members });
        }
        Ok(match name {
            "kstar" => LearnerSpec::kstar_default(),
            "knn" => {
                let p = KnnParams::default();
                LearnerSpec::Knn { k: p.k, weighting: p.weighting }
            }
            "rbf" => {
                let p = RbfParams::default();
                LearnerSpec::Rbf { centers: p.centers, max_iters: p.max_iters, tol: p.tol }
            }
            "linear" => LearnerSpec::Linear,
            "zeror" => LearnerSpec::ZeroR,
            "forest" => LearnerSpec::Forest { trees: 100, min_leaf: 1 },
            "hybrid" => {
                let p = HybridParams::default();
                LearnerSpec::Hybrid {
                    target_points: p.target_points,
                    trees: p.gate_trees,
                    blend: p.blend_percent,
                    gate_cv_folds: 0,
                }
            }
            other => {
                return Err(Error::config(format!(
                    "unknown learner {other:?} (expected kstar, knn, rbf, linear, zeror, forest, vote:<members>, hybrid)"
                )))
            }
        })
    }
}

impl std::str::FromStr for LearnerSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LearnerSpec::parse(s)
    }
}

/// A trained single-axis regressor.
#[derive(Debug, Clone)]
pub enum AxisModel {
    KStar(KStarModel),
    Knn(KnnModel),
    Rbf(RbfModel),
    Linear(LinearModel),
    ZeroR(ZeroRModel),
    Forest { forest: Forest, axis: Axis },
    Vote { members: Vec<AxisModel>, axis: Axis },
}

impl AxisModel {
    pub fn train(spec: &LearnerSpec, dataset: &Dataset, axis: Axis, seed: u64) -> Result<AxisModel> {
        Ok(match spec {
            LearnerSpec::KStar { blend } => {
                let view = preprocess(dataset, axis, spec.norm_method())?;
                AxisModel::KStar(KStarModel::train(view, KStarParams { blend_percent: *blend })?)
            }
            LearnerSpec::Knn { k, weighting } => {
                let view = preprocess(dataset, axis, spec.norm_method())?;
                AxisModel::Knn(KnnModel::train(view, KnnParams { k: *k, weighting: *weighting })?)
            }
            LearnerSpec::Rbf { centers, max_iters, tol } => {
                let view = preprocess(dataset, axis, spec.norm_method())?;
                let params = RbfParams {
                    centers: (*centers).min(view.n_points()),
                    seed: seeds::derive(seed, "rbf"),
                    max_iters: *max_iters,
                    tol: *tol,
                };
                AxisModel::Rbf(rbf::train(&view, params)?)
            }
            LearnerSpec::Linear => {
                let view = preprocess(dataset, axis, spec.norm_method())?;
                AxisModel::Linear(LinearModel::train(&view)?)
            }
            LearnerSpec::ZeroR => {
                let view = preprocess(dataset, axis, spec.norm_method())?;
                AxisModel::ZeroR(ZeroRModel::train(&view)?)
            }
            LearnerSpec::Forest { trees, min_leaf } => {
                let view = preprocess(dataset, axis, spec.norm_method())?;
                let params = ForestParams {
                    trees: *trees,
                    min_leaf: *min_leaf,
                    ..ForestParams::regression(seeds::derive(seed, "forest"))
                };
                let forest =
                    Forest::train_regressor(&view.features, &view.targets, params, view.norm)?;
                AxisModel::Forest { forest, axis }
            }
            LearnerSpec::Vote { members } => {
                let trained = members
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        AxisModel::train(m, dataset, axis, seeds::derive_indexed(seed, "vote", i as u64))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if trained.is_empty() {
                    return Err(Error::train("vote needs at least one member"));
                }
                AxisModel::Vote { members: trained, axis }
            }
            LearnerSpec::Hybrid { .. } => {
                return Err(Error::train(
                    "hybrid predicts both axes; train it as a position model",
                ))
            }
        })
    }

    pub fn predict(&self, fp: &Fingerprint) -> Result<f64> {
        match self {
            AxisModel::KStar(m) => m.predict(fp),
            AxisModel::Knn(m) => m.predict(fp),
            AxisModel::Rbf(m) => m.predict(fp),
            AxisModel::Linear(m) => m.predict(fp),
            AxisModel::ZeroR(m) => Ok(m.predict()),
            AxisModel::Forest { forest, .. } => forest.predict_fingerprint(fp),
            AxisModel::Vote { members, .. } => {
                let preds = members
                    .iter()
                    .map(|m| m.predict(fp))
                    .collect::<Result<Vec<_>>>()?;
                linear::vote_predict(&preds)
            }
        }
    }

    pub fn axis(&self) -> Axis {
        match self {
            AxisModel::KStar(m) => m.axis(),
            AxisModel::Knn(m) => m.axis(),
            AxisModel::Rbf(m) => m.axis,
            AxisModel::Linear(m) => m.axis,
            AxisModel::ZeroR(m) => m.axis,
            AxisModel::Forest { axis, .. } | AxisModel::Vote { axis, .. } => *axis,
        }
    }

    /// Training instances examined per prediction. Zero for parametric
    /// models; instance-based learners scan their whole training view.
    pub fn comparisons_per_query(&self) -> u64 {
        match self {
            AxisModel::KStar(m) => m.n_instances() as u64,
            AxisModel::Knn(m) => m.n_instances() as u64,
            AxisModel::Vote { members, .. } => {
                members.iter().map(|m| m.comparisons_per_query()).sum()
            }
            _ => 0,
        }
    }
}

/// One position fix with its bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct PositionFix {
    pub x: f64,
    pub y: f64,
    /// Distinct candidate instances examined for this fix. Per-axis pairs
    /// scan the same training view, so the pair counts it once; hybrid
    /// fallback sums the two distinct expert populations.
    pub comparisons: u64,
}

/// A trained predictor of both grid coordinates: either a per-axis pair
/// (trained with leak-removal preprocessing) or the partition-gated hybrid.
#[derive(Debug, Clone)]
pub enum PositionModel {
    PerAxis { x: Box<AxisModel>, y: Box<AxisModel> },
    Hybrid(HybridModel),
}

impl PositionModel {
    pub fn train(spec: &LearnerSpec, dataset: &Dataset, seed: u64) -> Result<PositionModel> {
        match spec {
            LearnerSpec::Hybrid { target_points, trees, blend, gate_cv_folds } => {
                let params = HybridParams {
                    target_points: *target_points,
                    gate_trees: *trees,
                    blend_percent: *blend,
                    gate_cv_folds: *gate_cv_folds,
                    ..HybridParams::default()
                };
                Ok(PositionModel::Hybrid(HybridModel::train(dataset, params, seed)?))
            }
            _ => {
                let x = AxisModel::train(spec, dataset, Axis::X, seeds::derive(seed, "axis-x"))?;
                let y = AxisModel::train(spec, dataset, Axis::Y, seeds::derive(seed, "axis-y"))?;
                Ok(PositionModel::PerAxis { x: Box::new(x), y: Box::new(y) })
            }
        }
    }

    pub fn predict(&self, fp: &Fingerprint) -> Result<PositionFix> {
        match self {
            PositionModel::PerAxis { x, y } => {
                let px = x.predict(fp)?;
                let py = y.predict(fp)?;
                Ok(PositionFix {
                    x: px,
                    y: py,
                    comparisons: x.comparisons_per_query().max(y.comparisons_per_query()),
                })
            }
            PositionModel::Hybrid(h) => {
                let (pos, diag) = h.predict(fp)?;
                Ok(PositionFix { x: pos.x, y: pos.y, comparisons: diag.comparisons })
            }
        }
    }
}

// ── persistence ─────────────────────────────────────────────────────────────

/// Reference to file-backed training data: instance models persist the
/// reference plus a content hash rather than copying the points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataRef {
    pub path: String,
    pub sha256: String,
}

impl DataRef {
    pub fn for_dataset(path: &Path, dataset: &Dataset) -> DataRef {
        DataRef {
            path: path.to_string_lossy().into_owned(),
            sha256: dataset.content_hash(),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        let dataset = Dataset::load_csv(Path::new(&self.path))?;
        let hash = dataset.content_hash();
        if hash != self.sha256 {
            return Err(Error::data(format!(
                "training data at {} changed: expected sha256 {}, found {hash}",
                self.path, self.sha256
            )));
        }
        Ok(dataset)
    }
}

/// Versioned on-disk model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub version: u32,
    pub model: SavedModelKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SavedModelKind {
    /// Instance models store spec + data reference; the view is rebuilt
    /// deterministically on load.
    InstanceAxisPair { spec: LearnerSpec, seed: u64, data: DataRef },
    /// Parametric pair with all parameters inline at full precision.
    ParametricAxisPair { spec: LearnerSpec, seed: u64, x: ParametricAxis, y: ParametricAxis },
    /// Hybrid bundle: scheme + gate inline, experts rebuilt from the data
    /// reference.
    Hybrid { params: HybridParams, seed: u64, bundle: crate::hybrid::HybridBundle, data: DataRef },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ParametricAxis {
    Rbf(RbfModel),
    Linear(LinearModel),
    ZeroR(ZeroRModel),
    Forest { forest: Forest, axis: Axis },
}

impl ParametricAxis {
    fn from_axis_model(m: &AxisModel) -> Option<ParametricAxis> {
        match m {
            AxisModel::Rbf(r) => Some(ParametricAxis::Rbf(r.clone())),
            AxisModel::Linear(l) => Some(ParametricAxis::Linear(l.clone())),
            AxisModel::ZeroR(z) => Some(ParametricAxis::ZeroR(z.clone())),
            AxisModel::Forest { forest, axis } => {
                Some(ParametricAxis::Forest { forest: forest.clone(), axis: *axis })
            }
            _ => None,
        }
    }

    fn into_axis_model(self) -> AxisModel {
        match self {
            ParametricAxis::Rbf(r) => AxisModel::Rbf(r),
            ParametricAxis::Linear(l) => AxisModel::Linear(l),
            ParametricAxis::ZeroR(z) => AxisModel::ZeroR(z),
            ParametricAxis::Forest { forest, axis } => AxisModel::Forest { forest, axis },
        }
    }
}

/// Persist a trained position model. Instance-based families (and hybrid)
/// require the file-backed `data` reference.
pub fn save_model(
    model: &PositionModel,
    spec: &LearnerSpec,
    seed: u64,
    data: Option<DataRef>,
    path: &Path,
) -> Result<()> {
    let kind = match (model, spec) {
        (PositionModel::Hybrid(h), LearnerSpec::Hybrid { .. }) => {
            let data = data.ok_or_else(|| {
                Error::config("hybrid persistence needs file-backed training data")
            })?;
            SavedModelKind::Hybrid { params: h.params().clone(), seed, bundle: h.bundle(), data }
        }
        (PositionModel::PerAxis { x, y }, _) => {
            match (ParametricAxis::from_axis_model(x), ParametricAxis::from_axis_model(y)) {
                (Some(px), Some(py)) => SavedModelKind::ParametricAxisPair {
                    spec: spec.clone(),
                    seed,
                    x: px,
                    y: py,
                },
                _ => {
                    let data = data.ok_or_else(|| {
                        Error::config(
                            "instance-based persistence needs file-backed training data",
                        )
                    })?;
                    SavedModelKind::InstanceAxisPair { spec: spec.clone(), seed, data }
                }
            }
        }
        _ => return Err(Error::config("model/spec mismatch at save")),
    };
    let doc = SavedModel { version: MODEL_FORMAT_VERSION, model: kind };
    let body = serde_json::to_vec_pretty(&doc)?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Load a persisted model, re-deriving instance views from their data
/// references (content hashes are verified).
pub fn load_model(path: &Path) -> Result<(PositionModel, LearnerSpec)> {
    let body = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let doc: SavedModel = serde_json::from_slice(&body)?;
    if doc.version != MODEL_FORMAT_VERSION {
        return Err(Error::data(format!(
            "unsupported model format version {}",
            doc.version
        )));
    }
    match doc.model {
        SavedModelKind::InstanceAxisPair { spec, seed, data } => {
            let dataset = data.load()?;
            let model = PositionModel::train(&spec, &dataset, seed)?;
            Ok((model, spec))
        }
        SavedModelKind::ParametricAxisPair { spec, x, y, .. } => {
            let mut mx = x.into_axis_model();
            let my = y.into_axis_model();
            if let AxisModel::Rbf(r) = &mut mx {
                let _ = r; // norm params travel inside each model
            }
            Ok((
                PositionModel::PerAxis { x: Box::new(mx), y: Box::new(my) },
                spec,
            ))
        }
        SavedModelKind::Hybrid { params, seed, bundle, data } => {
            let dataset = data.load()?;
            let model = HybridModel::from_bundle(bundle, &dataset, &params)?;
            let spec = LearnerSpec::Hybrid {
                target_points: params.target_points,
                trees: params.gate_trees,
                blend: params.blend_percent,
                gate_cv_folds: params.gate_cv_folds,
            };
            let _ = seed;
            Ok((PositionModel::Hybrid(model), spec))
        }
    }
}
