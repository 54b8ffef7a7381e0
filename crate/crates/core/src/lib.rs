//! Indoor localization engine: predicts 2-D position on a ceiling-tile
//! grid from mobile-sensor fingerprints (WiFi RSSI plus auxiliary sensors).
//!
//! The crate covers the full study pipeline:
//!
//! - dataset/schema types with a CSV + JSON-sidecar on-disk format
//! - instance-based learners (K* with an entropy-style transformation
//!   kernel, weighted kNN), a fully supervised RBF network, linear
//!   regression, ZeroR, an averaging combiner, and random forests
//! - the partition-gated hybrid: a random-forest gate picks a spatial
//!   partition, a per-partition K* expert localizes inside it
//! - an offline harness (repeated k-fold cross-validation, metric and
//!   delta tables) and an online in-motion replay harness
//! - a synthetic radio world (log-distance path loss, wall attenuation,
//!   shadowing) standing in for the building survey

pub mod dataset;
pub mod error;
pub mod eval;
pub mod hybrid;
pub mod linalg;
pub mod matrix;
pub mod models;
pub mod preprocess;
pub mod replay;
pub mod schema;
pub mod seeds;
pub mod synthworld;
pub mod units;

pub use dataset::{Bounds, Dataset, Fingerprint, GridPosition, LabeledPoint, MISSING_RSSI_DBM};
pub use error::{Error, Result};
pub use eval::{absolute_mean_error, axis_mean_error, compare_reports, kfold_cv, CvConfig, EvalReport};
pub use hybrid::{HybridModel, HybridParams, PartitionScheme};
pub use models::{LearnerSpec, PositionModel};
pub use preprocess::{preprocess, Axis, NormMethod, NormalizationParams};
pub use replay::{interpolate_truth, replay_eval, ReplayReport, WalkLog};
pub use schema::{AttributeDef, AttributeKind, AttributeSchema};
pub use synthworld::{Environment, OrientationMode, Pace, Trajectory};
pub use units::{tiles_to_meters, TILE_METERS};
