//! Fingerprint and dataset types plus the on-disk CSV format.
//!
//! Dataset CSV: header `x,y,<attr_1>,...,<attr_n>`, one row per reading,
//! UTF-8 with LF line endings. A missing RSSI reading (radio out of range)
//! is written as the sentinel `-100`. An optional JSON sidecar
//! (`<stem>.schema.json`) declares attribute kinds/units and the building
//! bounds; without it, kinds are inferred from canonical column names and
//! bounds from the data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::schema::{AttributeKind, AttributeSchema};

/// Sentinel stored for an out-of-range radio, in dBm. Readings this low do
/// not occur for detected radios (detection thresholds sit above it), so the
/// value doubles as the missing marker in files.
pub const MISSING_RSSI_DBM: f64 = -100.0;

/// One aligned vector of sensor values with a per-column missing mask.
/// Missing entries hold the sentinel value so distance-based learners can
/// consume the vector directly (two mutually-missing readings are "equal").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl Fingerprint {
    pub fn new(values: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        if values.len() != missing.len() {
            return Err(Error::data(format!(
                "fingerprint length {} does not match mask length {}",
                values.len(),
                missing.len()
            )));
        }
        for (i, (&v, &m)) in values.iter().zip(&missing).enumerate() {
            if m && v != MISSING_RSSI_DBM {
                return Err(Error::data(format!(
                    "missing entry {i} must hold the sentinel {MISSING_RSSI_DBM}, got {v}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::data(format!("non-finite value at column {i}")));
            }
        }
        Ok(Fingerprint { values, missing })
    }

    /// All-present fingerprint.
    pub fn dense(values: Vec<f64>) -> Result<Self> {
        let missing = vec![false; values.len()];
        Fingerprint::new(values, missing)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.missing[i]
    }
}

/// Position on the ceiling-tile grid. One tile is 2 ft; fractional values
/// are allowed (interpolated ground truth).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPosition {
    pub x: f64,
    pub y: f64,
}

impl GridPosition {
    pub fn new(x: f64, y: f64) -> Self {
        GridPosition { x, y }
    }

    /// Euclidean distance to `other` in tile units.
    pub fn distance_tiles(&self, other: &GridPosition) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Building extent in whole tiles. Valid positions satisfy
/// `0 <= x < width_tiles`, `0 <= y < height_tiles`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub width_tiles: u32,
    pub height_tiles: u32,
}

impl Bounds {
    pub fn new(width_tiles: u32, height_tiles: u32) -> Self {
        Bounds { width_tiles, height_tiles }
    }

    pub fn contains(&self, pos: &GridPosition) -> bool {
        pos.x >= 0.0
            && pos.y >= 0.0
            && pos.x < self.width_tiles as f64
            && pos.y < self.height_tiles as f64
    }
}

/// A fingerprint with its surveyed grid position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub fingerprint: Fingerprint,
    pub position: GridPosition,
}

/// Immutable survey dataset: schema, labeled points, building bounds.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<AttributeSchema>,
    points: Vec<LabeledPoint>,
    bounds: Bounds,
}

/// JSON sidecar declaring schema and bounds for a dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaSidecar {
    pub bounds: Bounds,
    pub schema: AttributeSchema,
}

impl Dataset {
    pub fn new(schema: Arc<AttributeSchema>, bounds: Bounds, points: Vec<LabeledPoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if p.fingerprint.len() != schema.len() {
                return Err(Error::data(format!(
                    "point {i}: fingerprint length {} does not match schema length {}",
                    p.fingerprint.len(),
                    schema.len()
                )));
            }
            if !bounds.contains(&p.position) {
                return Err(Error::data(format!(
                    "point {i}: position ({}, {}) outside declared bounds {}x{}",
                    p.position.x, p.position.y, bounds.width_tiles, bounds.height_tiles
                )));
            }
        }
        Ok(Dataset { schema, points, bounds })
    }

    pub fn schema(&self) -> &Arc<AttributeSchema> {
        &self.schema
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dataset restricted to the given point indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let points = indices.iter().map(|&i| self.points[i].clone()).collect();
        Dataset {
            schema: Arc::clone(&self.schema),
            points,
            bounds: self.bounds,
        }
    }

    /// Every `stride`-th point starting at `offset`, in original order.
    /// `stride` 1 returns an identical dataset.
    pub fn subsample(&self, stride: usize, offset: usize) -> Result<Dataset> {
        if stride < 1 {
            return Err(Error::config("subsample stride must be >= 1"));
        }
        if offset >= stride {
            return Err(Error::config(format!(
                "subsample offset {offset} must be < stride {stride}"
            )));
        }
        let points = self
            .points
            .iter()
            .skip(offset)
            .step_by(stride)
            .cloned()
            .collect();
        Ok(Dataset {
            schema: Arc::clone(&self.schema),
            points,
            bounds: self.bounds,
        })
    }

    // ── CSV round trip ──────────────────────────────────────────────────

    /// Canonical CSV bytes: header then one row per point, floats in
    /// shortest round-trip form, LF endings.
    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        out.push_str("x,y");
        for def in self.schema.attributes() {
            out.push(',');
            out.push_str(&def.name);
        }
        out.push('\n');
        for p in &self.points {
            let _ = write!(out, "{},{}", p.position.x, p.position.y);
            for &v in p.fingerprint.values() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out.into_bytes()
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Write the CSV plus its schema sidecar (`<stem>.schema.json`).
    pub fn save_with_sidecar(&self, path: &Path) -> Result<PathBuf> {
        self.save_csv(path)?;
        let sidecar = SchemaSidecar {
            bounds: self.bounds,
            schema: (*self.schema).clone(),
        };
        let sidecar_path = sidecar_path_for(path);
        let body = serde_json::to_vec_pretty(&sidecar)?;
        std::fs::write(&sidecar_path, body).map_err(|e| Error::io(&sidecar_path, e))?;
        Ok(sidecar_path)
    }

    pub fn from_csv_bytes(bytes: &[u8], sidecar: Option<&SchemaSidecar>) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|_| Error::data("dataset CSV is not UTF-8"))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::data("no header"))?;
        if header.trim().is_empty() {
            return Err(Error::data("no header"));
        }
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "x" || cols[1] != "y" {
            return Err(Error::data("header must start with x,y and carry attribute columns"));
        }
        let names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();

        let schema = match sidecar {
            Some(sc) => {
                let declared: Vec<&str> =
                    sc.schema.attributes().iter().map(|d| d.name.as_str()).collect();
                let got: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
                if declared != got {
                    return Err(Error::schema(
                        "CSV columns do not match the schema sidecar (missing, extra, or reordered columns)"
                            .to_string(),
                    ));
                }
                let mut s = sc.schema.clone();
                s.rebuild_index();
                Arc::new(s)
            }
            None => Arc::new(AttributeSchema::infer_from_names(&names)?),
        };

        let n_attrs = schema.len();
        let rssi_cols: Vec<bool> = schema
            .attributes()
            .iter()
            .map(|d| d.kind == AttributeKind::Rssi)
            .collect();

        let mut points = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let parse = |field: Option<&str>, what: &str| -> Result<f64> {
                let raw = field.ok_or_else(|| {
                    Error::data(format!("row {}: missing {what}", lineno + 2))
                })?;
                raw.parse::<f64>().map_err(|_| {
                    Error::data(format!("row {}: non-numeric {what} cell {raw:?}", lineno + 2))
                })
            };
            let x = parse(fields.next(), "x")?;
            let y = parse(fields.next(), "y")?;
            let mut values = Vec::with_capacity(n_attrs);
            let mut missing = Vec::with_capacity(n_attrs);
            for i in 0..n_attrs {
                let v = parse(fields.next(), &format!("column {:?}", schema.attr(i).name))?;
                missing.push(rssi_cols[i] && v == MISSING_RSSI_DBM);
                values.push(v);
            }
            if fields.next().is_some() {
                return Err(Error::data(format!(
                    "row {}: more cells than header columns",
                    lineno + 2
                )));
            }
            points.push(LabeledPoint {
                fingerprint: Fingerprint::new(values, missing)?,
                position: GridPosition::new(x, y),
            });
        }

        let bounds = match sidecar {
            Some(sc) => sc.bounds,
            None => infer_bounds(&points),
        };
        Dataset::new(schema, bounds, points)
    }

    /// Load a dataset CSV, honoring `<stem>.schema.json` when present.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let sidecar_path = sidecar_path_for(path);
        let sidecar = if sidecar_path.exists() {
            let body = std::fs::read(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
            Some(serde_json::from_slice::<SchemaSidecar>(&body)?)
        } else {
            None
        };
        Dataset::from_csv_bytes(&bytes, sidecar.as_ref())
    }

    /// SHA-256 of the canonical CSV bytes; identifies the training data in
    /// persisted instance models.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_csv_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            let _ = write!(hex, "{b:02x}");
        }
        hex
    }
}

fn sidecar_path_for(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    csv_path.with_file_name(format!("{stem}.schema.json"))
}

fn infer_bounds(points: &[LabeledPoint]) -> Bounds {
    let mut w = 1.0f64;
    let mut h = 1.0f64;
    for p in points {
        w = w.max(p.position.x.floor() + 1.0);
        h = h.max(p.position.y.floor() + 1.0);
    }
    Bounds::new(w as u32, h as u32)
}
