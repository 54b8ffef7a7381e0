//! Online in-motion evaluation: interpolated ground truth along a walked
//! route, per-prediction error in meters, a constant compute-latency model,
//! and the online results table layout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{Fingerprint, GridPosition, MISSING_RSSI_DBM};
use crate::error::{Error, Result};
use crate::models::PositionModel;
use crate::schema::{AttributeKind, AttributeSchema};
use crate::synthworld::{OrientationMode, Trajectory};
use crate::units::tiles_to_meters;

/// Timestamped fingerprints captured along a trajectory.
#[derive(Debug, Clone)]
pub struct WalkLog {
    schema: Arc<AttributeSchema>,
    samples: Vec<(f64, Fingerprint)>,
    trajectory: Trajectory,
    orientation: OrientationMode,
}

impl WalkLog {
    pub fn new(
        schema: Arc<AttributeSchema>,
        samples: Vec<(f64, Fingerprint)>,
        trajectory: Trajectory,
        orientation: OrientationMode,
    ) -> Result<WalkLog> {
        let t0 = trajectory.start_time();
        let t1 = trajectory.end_time();
        let mut prev = f64::NEG_INFINITY;
        for &(t, ref fp) in &samples {
            if t <= prev {
                return Err(Error::data("walk timestamps must be strictly increasing"));
            }
            if t < t0 - 1e-9 || t > t1 + 1e-9 {
                return Err(Error::data(format!(
                    "sample at t={t} outside the trajectory span [{t0}, {t1}]"
                )));
            }
            if fp.len() != schema.len() {
                return Err(Error::data("walk fingerprint does not match schema"));
            }
            prev = t;
        }
        Ok(WalkLog { schema, samples, trajectory, orientation })
    }

    pub fn samples(&self) -> &[(f64, Fingerprint)] {
        &self.samples
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn orientation(&self) -> OrientationMode {
        self.orientation
    }

    pub fn schema(&self) -> &Arc<AttributeSchema> {
        &self.schema
    }

    /// Walk CSV: `t` column then the fingerprint columns. Trajectory and
    /// orientation ride in a JSON sidecar (`<stem>.walk.json`).
    pub fn save(&self, path: &Path) -> Result<PathBuf> {
        let mut out = String::from("t");
        for def in self.schema.attributes() {
            out.push(',');
            out.push_str(&def.name);
        }
        out.push('\n');
        for (t, fp) in &self.samples {
            let _ = write!(out, "{t}");
            for &v in fp.values() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
        let meta = WalkSidecar {
            trajectory: self.trajectory.clone(),
            orientation: self.orientation,
            schema: (*self.schema).clone(),
        };
        let meta_path = sidecar_path(path);
        std::fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)
            .map_err(|e| Error::io(&meta_path, e))?;
        Ok(meta_path)
    }

    pub fn load(path: &Path) -> Result<WalkLog> {
        let meta_path = sidecar_path(path);
        let meta_body = std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let mut meta: WalkSidecar = serde_json::from_slice(&meta_body)?;
        meta.schema.rebuild_index();
        let schema = Arc::new(meta.schema);

        let body = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&body).map_err(|_| Error::data("walk CSV is not UTF-8"))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::data("no header"))?;
        let expected: Vec<&str> = std::iter::once("t")
            .chain(schema.attributes().iter().map(|d| d.name.as_str()))
            .collect();
        if header.split(',').collect::<Vec<_>>() != expected {
            return Err(Error::schema("walk CSV columns do not match the sidecar schema"));
        }
        let rssi: Vec<bool> = schema
            .attributes()
            .iter()
            .map(|d| d.kind == AttributeKind::Rssi)
            .collect();
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut values = Vec::with_capacity(schema.len());
            let mut missing = Vec::with_capacity(schema.len());
            let mut fields = line.split(',');
            let t: f64 = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::data(format!("row {}: bad timestamp", lineno + 2)))?;
            for j in 0..schema.len() {
                let raw = fields
                    .next()
                    .ok_or_else(|| Error::data(format!("row {}: missing cell", lineno + 2)))?;
                let v: f64 = raw.parse().map_err(|_| {
                    Error::data(format!("row {}: non-numeric cell {raw:?}", lineno + 2))
                })?;
                missing.push(rssi[j] && v == MISSING_RSSI_DBM);
                values.push(v);
            }
            samples.push((t, Fingerprint::new(values, missing)?));
        }
        WalkLog::new(schema, samples, meta.trajectory, meta.orientation)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WalkSidecar {
    trajectory: Trajectory,
    orientation: OrientationMode,
    schema: AttributeSchema,
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "walk".to_string());
    csv_path.with_file_name(format!("{stem}.walk.json"))
}

/// Piecewise-linear position along the trajectory at time `t`. Exact at
/// vertices; errors outside the time span.
pub fn interpolate_truth(trajectory: &Trajectory, t: f64) -> Result<GridPosition> {
    let vertices = &trajectory.vertices;
    if vertices.is_empty() {
        return Err(Error::data("empty trajectory"));
    }
    let t0 = vertices[0].1;
    let t1 = vertices[vertices.len() - 1].1;
    if t < t0 - 1e-9 || t > t1 + 1e-9 {
        return Err(Error::data(format!("t={t} outside trajectory span [{t0}, {t1}]")));
    }
    let t = t.clamp(t0, t1);
    // bracketing segment; exact hits return the vertex itself
    for pair in vertices.windows(2) {
        let (a, ta) = (pair[0].0, pair[0].1);
        let (b, tb) = (pair[1].0, pair[1].1);
        if t <= tb {
            if t == ta {
                return Ok(a);
            }
            if t == tb {
                return Ok(b);
            }
            let f = (t - ta) / (tb - ta);
            return Ok(GridPosition::new(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)));
        }
    }
    Ok(vertices[vertices.len() - 1].0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayPoint {
    pub t: f64,
    pub pred_x: f64,
    pub pred_y: f64,
    pub true_x: f64,
    pub true_y: f64,
    pub error_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub average_error_m: f64,
    pub latency_s: f64,
    pub pace_label: String,
    pub orientation: String,
    pub series: Vec<ReplayPoint>,
}

impl ReplayReport {
    /// Series CSV for external plotting: prediction dots, truth path,
    /// time coloring.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("t,pred_x,pred_y,true_x,true_y,error_m\n");
        for p in &self.series {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.t, p.pred_x, p.pred_y, p.true_x, p.true_y, p.error_m
            );
        }
        out
    }
}

/// Replay a walk through a trained model. Each sample captured at time `t`
/// is compared against the walker's true position at `t + latency_s` (the
/// position they actually occupy when the prediction arrives); latency 0 is
/// the idealized instant predictor. Truth clamps to the final vertex for
/// predictions landing after the walk ends.
pub fn replay_eval(model: &PositionModel, log: &WalkLog, latency_s: f64) -> Result<ReplayReport> {
    if log.samples().is_empty() {
        return Err(Error::data("walk log has no samples"));
    }
    if latency_s < 0.0 {
        return Err(Error::config("latency must be >= 0"));
    }
    let t_end = log.trajectory().end_time();
    let mut series = Vec::with_capacity(log.samples().len());
    let mut total = 0.0;
    for (t, fp) in log.samples() {
        let fix = model.predict(fp)?;
        let truth = interpolate_truth(log.trajectory(), (t + latency_s).min(t_end))?;
        let error_m = tiles_to_meters(
            ((fix.x - truth.x).powi(2) + (fix.y - truth.y).powi(2)).sqrt(),
        );
        total += error_m;
        series.push(ReplayPoint {
            t: *t,
            pred_x: fix.x,
            pred_y: fix.y,
            true_x: truth.x,
            true_y: truth.y,
            error_m,
        });
    }
    Ok(ReplayReport {
        average_error_m: total / series.len() as f64,
        latency_s,
        pace_label: log.trajectory().pace_label.clone(),
        orientation: log.orientation().label().to_string(),
        series,
    })
}

/// One row of the online results table: algorithm, pace, orientation,
/// average error at two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRow {
    pub algorithm: String,
    pub pace: String,
    pub orientation: String,
    pub average_error_m: f64,
}

pub const ONLINE_TABLE_HEADER: &str = "Algorithm,Pace,Orientation,Average Error (m)";

impl OnlineRow {
    pub fn format(&self) -> String {
        format!(
            "{},{},{},{:.2}",
            self.algorithm, self.pace, self.orientation, self.average_error_m
        )
    }

    pub fn parse(line: &str) -> Result<OnlineRow> {
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != 4 {
            return Err(Error::data(format!("online row needs 4 fields, got {}", parts.len())));
        }
        Ok(OnlineRow {
            algorithm: parts[0].to_string(),
            pace: parts[1].to_string(),
            orientation: parts[2].to_string(),
            average_error_m: parts[3]
                .parse()
                .map_err(|_| Error::data(format!("bad error value {:?}", parts[3])))?,
        })
    }
}

pub fn online_table_csv(rows: &[OnlineRow]) -> String {
    let mut out = String::from(ONLINE_TABLE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.format());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthworld::{generate_trajectory, Environment};

    fn line_trajectory() -> Trajectory {
        let env = Environment::small_open_preset(40, 40);
        generate_trajectory(
            &env,
            &[GridPosition::new(0.0, 0.0), GridPosition::new(10.0, 0.0)],
            crate::units::tiles_to_meters(1.0), // 1 tile per second
            "Test",
        )
        .unwrap()
    }

    #[test]
    fn interpolation_exact_at_vertices() {
        let traj = line_trajectory();
        for &(v, t) in &traj.vertices {
            let p = interpolate_truth(&traj, t).unwrap();
            assert_eq!((p.x, p.y), (v.x, v.y));
        }
    }

    #[test]
    fn linear_midspan() {
        let traj = line_trajectory(); // (0,0)@0s -> (10,0)@10s
        assert!((traj.end_time() - 10.0).abs() < 1e-9);
        let p = interpolate_truth(&traj, 4.0).unwrap();
        assert!((p.x - 4.0).abs() < 1e-9);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn three_segment_hand_fractions() {
        let env = Environment::small_open_preset(40, 40);
        let pace = crate::units::tiles_to_meters(1.0); // 1 tile/s
        let traj = generate_trajectory(
            &env,
            &[
                GridPosition::new(0.0, 0.0),
                GridPosition::new(4.0, 0.0),  // reached at t=4
                GridPosition::new(4.0, 3.0),  // reached at t=7
                GridPosition::new(10.0, 3.0), // reached at t=13
            ],
            pace,
            "Test",
        )
        .unwrap();
        // t=5.5 sits 1.5/3 through the second segment
        let p = interpolate_truth(&traj, 5.5).unwrap();
        assert!((p.x - 4.0).abs() < 1e-9);
        assert!((p.y - 1.5).abs() < 1e-9);
    }

    #[test]
    fn outside_span_errors() {
        let traj = line_trajectory();
        assert!(interpolate_truth(&traj, -0.5).is_err());
        assert!(interpolate_truth(&traj, 10.5).is_err());
    }

    #[test]
    fn continuity_under_millisecond_steps() {
        let traj = line_trajectory();
        let pace_m = traj.pace_mps;
        let mut prev = interpolate_truth(&traj, 0.0).unwrap();
        let mut t = 0.0;
        while t < traj.end_time() {
            t += 0.001;
            let p = interpolate_truth(&traj, t.min(traj.end_time())).unwrap();
            let jump_m = crate::units::tiles_to_meters(prev.distance_tiles(&p));
            assert!(jump_m <= pace_m * 0.001 + 1e-9, "jump {jump_m}");
            prev = p;
        }
    }

    #[test]
    fn online_row_round_trips_table_layout() {
        let row = OnlineRow::parse("K*,Slow,Changing,5.08").unwrap();
        assert_eq!(row.format(), "K*,Slow,Changing,5.08");
        assert_eq!(row.algorithm, "K*");
        assert!((row.average_error_m - 5.08).abs() < 1e-12);
        let table = online_table_csv(&[row]);
        assert_eq!(table, "Algorithm,Pace,Orientation,Average Error (m)\nK*,Slow,Changing,5.08\n");
    }
}
