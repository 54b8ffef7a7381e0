//! Synthetic stand-in for the building survey: a log-distance radio world
//! with wall attenuation and lognormal shadowing, grid survey generation
//! over the full sensor schema, and paced walk trajectories for the online
//! protocol.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

use crate::dataset::{Bounds, Dataset, Fingerprint, GridPosition, LabeledPoint, MISSING_RSSI_DBM};
use crate::error::{Error, Result};
use crate::replay::WalkLog;
use crate::schema::{AttributeDef, AttributeKind, AttributeSchema};
use crate::seeds;
use crate::units::TILE_METERS;

/// One transmitting radio; several radios share each physical access point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Radio {
    pub ap_id: u32,
    pub name: String,
    /// Position in tiles.
    pub x: f64,
    pub y: f64,
    /// Transmit power observed at the reference distance, dBm.
    pub tx_power_dbm: f64,
}

/// Axis-aligned obstacle. Survey points cannot sit on covered tiles; a
/// radio path crossing the rectangle loses `attenuation_db` once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub attenuation_db: f64,
    pub label: String,
}

impl Obstacle {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32, attenuation_db: f64, label: &str) -> Obstacle {
        Obstacle {
            x0: x0 as f64,
            y0: y0 as f64,
            x1: x1 as f64,
            y1: y1 as f64,
            attenuation_db,
            label: label.to_string(),
        }
    }

    pub fn contains(&self, pos: &GridPosition) -> bool {
        pos.x >= self.x0 && pos.x < self.x1 && pos.y >= self.y0 && pos.y < self.y1
    }

    pub fn tile_count(&self) -> u64 {
        ((self.x1 - self.x0) as u64) * ((self.y1 - self.y0) as u64)
    }
}

/// Auxiliary sensor synthesis: weakly informative noise around
/// position-independent baselines. GPS columns are constants (the survey
/// recorded them, but indoors their accuracy was too low to matter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorNoise {
    pub light_baseline: f64,
    pub light_sigma: f64,
    pub gps_lat: f64,
    pub gps_lon: f64,
    pub accel_sigma: f64,
    pub mag_sigma: f64,
    pub rot_sigma: f64,
    pub orient_sigma_deg: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        SensorNoise {
            light_baseline: 300.0,
            light_sigma: 60.0,
            gps_lat: 40.0,
            gps_lon: -95.0,
            accel_sigma: 0.05,
            mag_sigma: 0.8,
            rot_sigma: 0.02,
            orient_sigma_deg: 3.0,
        }
    }
}

impl SensorNoise {
    /// Exact zero-noise variant for deterministic fixtures.
    pub fn silent() -> Self {
        SensorNoise {
            light_sigma: 0.0,
            accel_sigma: 0.0,
            mag_sigma: 0.0,
            rot_sigma: 0.0,
            orient_sigma_deg: 0.0,
            ..SensorNoise::default()
        }
    }
}

/// The radio world. Serialized to JSON as the environment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub bounds: Bounds,
    pub radios: Vec<Radio>,
    pub obstacles: Vec<Obstacle>,
    /// Log-distance path-loss exponent.
    pub path_loss_exponent: f64,
    /// Lognormal shadowing standard deviation, dB.
    pub shadowing_sigma_db: f64,
    /// Reference distance for `tx_power_dbm`, meters.
    pub reference_distance_m: f64,
    /// Radios weaker than this at the receiver are not detected.
    pub detection_threshold_dbm: f64,
    pub sensors: SensorNoise,
}

/// Device orientation over a walk: held facing south (the survey posture)
/// or re-drawn per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrientationMode {
    Constant,
    Changing,
}

impl OrientationMode {
    pub fn label(self) -> &'static str {
        match self {
            OrientationMode::Constant => "Constant",
            OrientationMode::Changing => "Changing",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constant" => Ok(OrientationMode::Constant),
            "changing" => Ok(OrientationMode::Changing),
            other => Err(Error::config(format!(
                "unknown orientation {other:?}, expected constant or changing"
            ))),
        }
    }
}

/// Azimuth the survey device faced.
pub const SURVEY_ORIENTATION_DEG: f64 = 180.0;

impl Environment {
    pub fn validate(&self) -> Result<()> {
        if self.radios.is_empty() {
            return Err(Error::config("environment needs at least one radio"));
        }
        if self.shadowing_sigma_db < 0.0 {
            return Err(Error::config("shadowing sigma must be >= 0"));
        }
        if self.detection_threshold_dbm <= MISSING_RSSI_DBM {
            return Err(Error::config(format!(
                "detection threshold must sit above the missing sentinel {MISSING_RSSI_DBM}"
            )));
        }
        if self.reference_distance_m <= 0.0 {
            return Err(Error::config("reference distance must be positive"));
        }
        Ok(())
    }

    /// The full attribute schema this world emits: one RSSI column per
    /// radio followed by the auxiliary sensor block.
    pub fn schema(&self) -> Result<AttributeSchema> {
        let mut defs: Vec<AttributeDef> = self
            .radios
            .iter()
            .map(|r| AttributeDef::new(r.name.clone(), AttributeKind::Rssi))
            .collect();
        for (name, kind) in [
            ("light", AttributeKind::Light),
            ("gps_lat", AttributeKind::GpsLat),
            ("gps_lon", AttributeKind::GpsLon),
            ("accel_x", AttributeKind::AccelX),
            ("accel_y", AttributeKind::AccelY),
            ("accel_z", AttributeKind::AccelZ),
            ("mag_x", AttributeKind::MagX),
            ("mag_y", AttributeKind::MagY),
            ("mag_z", AttributeKind::MagZ),
            ("rot_x", AttributeKind::RotX),
            ("rot_y", AttributeKind::RotY),
            ("rot_z", AttributeKind::RotZ),
            ("orient_x", AttributeKind::OrientX),
            ("orient_y", AttributeKind::OrientY),
            ("orient_z", AttributeKind::OrientZ),
        ] {
            defs.push(AttributeDef::new(name, kind));
        }
        AttributeSchema::new(defs)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Environment> {
        let body = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let env: Environment = serde_json::from_slice(&body)?;
        env.validate()?;
        Ok(env)
    }

    /// Is the tile at `pos` covered by any obstacle?
    pub fn obstructed(&self, pos: &GridPosition) -> bool {
        self.obstacles.iter().any(|o| o.contains(pos))
    }

    /// Walls the segment radio->receiver crosses, summed in dB.
    pub fn wall_loss_db(&self, from: (f64, f64), to: (f64, f64)) -> f64 {
        self.obstacles
            .iter()
            .filter(|o| o.attenuation_db != 0.0 && segment_crosses_rect(from, to, o))
            .map(|o| o.attenuation_db)
            .sum()
    }

    /// Received level from one radio at a position, or `None` when the
    /// signal falls below the detection threshold. Deterministic given the
    /// RNG stream.
    pub fn rssi_at(&self, radio: &Radio, pos: &GridPosition, rng: &mut ChaCha8Rng) -> Option<f64> {
        let d_tiles = ((radio.x - pos.x).powi(2) + (radio.y - pos.y).powi(2)).sqrt();
        let d_m = (d_tiles * TILE_METERS).max(self.reference_distance_m);
        let mut level = radio.tx_power_dbm
            - 10.0 * self.path_loss_exponent * (d_m / self.reference_distance_m).log10();
        level -= self.wall_loss_db((radio.x, radio.y), (pos.x, pos.y));
        if self.shadowing_sigma_db > 0.0 {
            let normal = Normal::new(0.0, self.shadowing_sigma_db).expect("sigma checked >= 0");
            level += normal.sample(rng);
        }
        (level >= self.detection_threshold_dbm).then_some(level)
    }

    /// Full sensor fingerprint at a position with the device at the given
    /// azimuth.
    pub fn fingerprint_at(
        &self,
        pos: &GridPosition,
        orientation_deg: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Fingerprint> {
        let mut values = Vec::with_capacity(self.radios.len() + 15);
        let mut missing = Vec::with_capacity(self.radios.len() + 15);
        for radio in &self.radios {
            match self.rssi_at(radio, pos, rng) {
                Some(level) => {
                    values.push(level);
                    missing.push(false);
                }
                None => {
                    values.push(MISSING_RSSI_DBM);
                    missing.push(true);
                }
            }
        }
        let s = &self.sensors;
        let mut noise = |sigma: f64| -> f64 {
            if sigma > 0.0 {
                Normal::new(0.0, sigma).expect("sigma > 0").sample(rng)
            } else {
                0.0
            }
        };
        let aux = [
            (s.light_baseline + noise(s.light_sigma)).max(0.0),
            s.gps_lat,
            s.gps_lon,
            noise(s.accel_sigma),
            noise(s.accel_sigma),
            9.81 + noise(s.accel_sigma),
            21.0 + noise(s.mag_sigma),
            4.0 + noise(s.mag_sigma),
            -44.0 + noise(s.mag_sigma),
            noise(s.rot_sigma),
            noise(s.rot_sigma),
            noise(s.rot_sigma),
            orientation_deg + noise(s.orient_sigma_deg),
            noise(s.orient_sigma_deg),
            noise(s.orient_sigma_deg),
        ];
        for v in aux {
            values.push(v);
            missing.push(false);
        }
        Fingerprint::new(values, missing)
    }

    /// Survey the grid: one labeled point per unobstructed tile at the
    /// given spacing, device held at the survey orientation. Per-point RNG
    /// streams derive from the seed, so rows generate in parallel and the
    /// result is independent of scheduling.
    pub fn generate_dataset(&self, spacing_tiles: u32, seed: u64) -> Result<Dataset> {
        if spacing_tiles < 1 {
            return Err(Error::config("survey spacing must be >= 1 tile"));
        }
        self.validate()?;
        let schema = Arc::new(self.schema()?);
        let width = self.bounds.width_tiles;
        let height = self.bounds.height_tiles;

        let rows: Vec<Vec<LabeledPoint>> = (0..height)
            .step_by(spacing_tiles as usize)
            .collect::<Vec<u32>>()
            .par_iter()
            .map(|&y| -> Result<Vec<LabeledPoint>> {
                let mut row = Vec::new();
                for x in (0..width).step_by(spacing_tiles as usize) {
                    let pos = GridPosition::new(x as f64, y as f64);
                    if self.obstructed(&pos) {
                        continue;
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_indexed(
                        seed,
                        "survey-point",
                        (y as u64) * (width as u64) + x as u64,
                    ));
                    let fingerprint =
                        self.fingerprint_at(&pos, SURVEY_ORIENTATION_DEG, &mut rng)?;
                    row.push(LabeledPoint { fingerprint, position: pos });
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;

        Dataset::new(schema, self.bounds, rows.into_iter().flatten().collect())
    }

    /// The desk-scale library fixture: 102x64 tiles, 21 access points with
    /// 157 radios, dense book stacks on the left, a service core, study
    /// rooms along the back, and reading tables on the right. Obstacles
    /// leave ~3110 surveyable tiles at spacing 1.
    pub fn library_preset() -> Environment {
        let mut radios = Vec::new();
        // AP columns sit a few tiles off the natural partition borders,
        // where the cross-building RSSI gradient discriminates best
        let xs = [15.0, 29.0, 44.0, 58.0, 73.0, 87.0, 98.0];
        let ys = [10.0, 32.0, 54.0];
        let mut ap_id = 0u32;
        for &ay in &ys {
            for &ax in &xs {
                let n_radios = if ap_id < 10 { 8 } else { 7 };
                for r in 0..n_radios {
                    radios.push(Radio {
                        ap_id,
                        name: format!("rssi_ap{ap_id:02}_r{r}"),
                        x: ax,
                        y: ay,
                        tx_power_dbm: -40.0 - 0.7 * r as f64,
                    });
                }
                ap_id += 1;
            }
        }
        debug_assert_eq!(radios.len(), 157);

        let mut obstacles = Vec::new();
        // book stacks, left wing: 14 double-sided shelves with 1-tile
        // aisles, broken by a cross-aisle at y in [30, 32)
        for k in 0..14u32 {
            let x0 = 3 + 3 * k;
            obstacles.push(Obstacle::new(x0, 2, x0 + 2, 30, 1.5, "stack"));
            obstacles.push(Obstacle::new(x0, 32, x0 + 2, 62, 1.5, "stack"));
        }
        // back-right stacks: 7 horizontal shelves
        for m in 0..7u32 {
            let y0 = 42 + 3 * m;
            obstacles.push(Obstacle::new(52, y0, 100, y0 + 2, 1.5, "stack"));
        }
        obstacles.push(Obstacle::new(46, 18, 56, 40, 9.0, "service-core"));
        obstacles.push(Obstacle::new(44, 0, 56, 6, 3.0, "entrance"));
        obstacles.push(Obstacle::new(0, 62, 102, 64, 5.0, "study-rooms"));
        obstacles.push(Obstacle::new(0, 12, 3, 62, 4.0, "archive"));
        obstacles.push(Obstacle::new(2, 0, 44, 2, 1.0, "lobby-desk"));
        // reading tables: block survey positions, no signal loss
        for c in 0..7u32 {
            for r in 0..7u32 {
                let x0 = 56 + 7 * c;
                let y0 = 6 + 5 * r;
                obstacles.push(Obstacle::new(x0, y0, x0 + 4, y0 + 2, 0.0, "table"));
            }
        }
        // obstacles are pairwise disjoint and cover 3418 tiles, leaving a
        // 3110-point survey at spacing 1

        Environment {
            bounds: Bounds::new(102, 64),
            radios,
            obstacles,
            path_loss_exponent: 3.5,
            shadowing_sigma_db: 1.5,
            reference_distance_m: 1.0,
            detection_threshold_dbm: -92.0,
            sensors: SensorNoise::default(),
        }
    }

    /// Plain open-floor world at the generic indoor defaults (n = 3,
    /// 4 dB shadowing, -95 dBm threshold), access points on a seeded
    /// jittered grid.
    pub fn open_preset(width: u32, height: u32, access_points: u32, seed: u64) -> Environment {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "open-env"));
        let cols = (access_points as f64).sqrt().ceil() as u32;
        let rows = access_points.div_ceil(cols);
        let mut radios = Vec::new();
        let mut ap_id = 0u32;
        'outer: for r in 0..rows {
            for c in 0..cols {
                if ap_id >= access_points {
                    break 'outer;
                }
                let x = (c as f64 + 0.5) / cols as f64 * width as f64 + rng.gen_range(-1.0..1.0);
                let y = (r as f64 + 0.5) / rows as f64 * height as f64 + rng.gen_range(-1.0..1.0);
                for radio in 0..2u32 {
                    radios.push(Radio {
                        ap_id,
                        name: format!("rssi_ap{ap_id:02}_r{radio}"),
                        x: x.clamp(0.0, width as f64 - 1.0),
                        y: y.clamp(0.0, height as f64 - 1.0),
                        tx_power_dbm: -40.0 - 4.0 * radio as f64,
                    });
                }
                ap_id += 1;
            }
        }
        Environment {
            bounds: Bounds::new(width, height),
            radios,
            obstacles: Vec::new(),
            path_loss_exponent: 3.0,
            shadowing_sigma_db: 4.0,
            reference_distance_m: 1.0,
            detection_threshold_dbm: -95.0,
            sensors: SensorNoise::default(),
        }
    }

    /// A representative walk route for this world. The library preset
    /// threads the stacks cross-aisle then loops the open reading area;
    /// other worlds get an inset rectangular loop.
    pub fn default_walk_route(&self) -> Vec<GridPosition> {
        if self.bounds == Bounds::new(102, 64) && !self.obstacles.is_empty() {
            return [
                (45.0, 8.0),
                (45.0, 30.5),
                (4.0, 30.5),
                (45.0, 30.5),
                (45.0, 40.5),
                (95.5, 40.5),
                (95.5, 10.5),
                (61.5, 10.5),
            ]
            .into_iter()
            .map(|(x, y)| GridPosition::new(x, y))
            .collect();
        }
        let w = self.bounds.width_tiles as f64;
        let h = self.bounds.height_tiles as f64;
        [
            (0.2 * w, 0.2 * h),
            (0.8 * w, 0.2 * h),
            (0.8 * w, 0.8 * h),
            (0.2 * w, 0.8 * h),
            (0.2 * w, 0.25 * h),
        ]
        .into_iter()
        .map(|(x, y)| GridPosition::new(x, y))
        .collect()
    }

    /// Zero-noise twin of an environment (no shadowing, silent sensors).
    pub fn without_noise(&self) -> Environment {
        Environment {
            shadowing_sigma_db: 0.0,
            sensors: SensorNoise::silent(),
            ..self.clone()
        }
    }

    /// Small open-floor world for fast tests: no obstacles, a 3x2 grid of
    /// single-radio access points.
    pub fn small_open_preset(width: u32, height: u32) -> Environment {
        let mut radios = Vec::new();
        let mut ap_id = 0u32;
        for gy in 0..2u32 {
            for gx in 0..3u32 {
                let x = (width as f64) * (0.2 + 0.3 * gx as f64);
                let y = (height as f64) * (0.25 + 0.5 * gy as f64);
                radios.push(Radio {
                    ap_id,
                    name: format!("rssi_ap{ap_id:02}_r0"),
                    x,
                    y,
                    tx_power_dbm: -40.0,
                });
                ap_id += 1;
            }
        }
        Environment {
            bounds: Bounds::new(width, height),
            radios,
            obstacles: Vec::new(),
            path_loss_exponent: 3.0,
            shadowing_sigma_db: 0.0,
            reference_distance_m: 1.0,
            detection_threshold_dbm: -95.0,
            sensors: SensorNoise::silent(),
        }
    }
}

/// Liang-Barsky: does the open segment cross the rectangle interior?
fn segment_crosses_rect(from: (f64, f64), to: (f64, f64), rect: &Obstacle) -> bool {
    let dx = to.0 - from.0;
    let dy = to.1 - from.1;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, from.0 - rect.x0),
        (dx, rect.x1 - from.0),
        (-dy, from.1 - rect.y0),
        (dy, rect.y1 - from.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false; // parallel and outside this slab
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    t0 < t1
}

// ── walk trajectories ───────────────────────────────────────────────────────

/// The three paces the online protocol names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pace {
    Slow,
    Normal,
    Fast,
}

impl Pace {
    pub fn mps(self) -> f64 {
        match self {
            Pace::Slow => 0.75,
            Pace::Normal => 1.15,
            Pace::Fast => 1.69,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Pace::Slow => "Slow",
            Pace::Normal => "Normal",
            Pace::Fast => "Fast",
        }
    }

    pub fn parse(s: &str) -> Result<Pace> {
        match s.to_ascii_lowercase().as_str() {
            "slow" => Ok(Pace::Slow),
            "normal" => Ok(Pace::Normal),
            "fast" | "quick" => Ok(Pace::Fast),
            other => Err(Error::config(format!(
                "unknown pace {other:?}, expected slow, normal, or fast"
            ))),
        }
    }
}

/// A walked route: vertices with the timestamps a constant-pace walker
/// reaches them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vertices: Vec<(GridPosition, f64)>,
    pub pace_mps: f64,
    pub pace_label: String,
}

impl Trajectory {
    pub fn start_time(&self) -> f64 {
        self.vertices.first().map(|v| v.1).unwrap_or(0.0)
    }

    pub fn end_time(&self) -> f64 {
        self.vertices.last().map(|v| v.1).unwrap_or(0.0)
    }

    /// A walker standing at one point for `duration_s` seconds.
    pub fn stationary(pos: GridPosition, duration_s: f64) -> Trajectory {
        Trajectory {
            vertices: vec![(pos, 0.0), (pos, duration_s.max(f64::MIN_POSITIVE))],
            pace_mps: 0.0,
            pace_label: "Static".to_string(),
        }
    }
}

/// Timestamp each vertex of a route walked at constant pace: segment
/// lengths in meters divided by the pace.
pub fn generate_trajectory(
    env: &Environment,
    vertices: &[GridPosition],
    pace_mps: f64,
    pace_label: &str,
) -> Result<Trajectory> {
    if vertices.len() < 2 {
        return Err(Error::config("a trajectory needs at least two vertices"));
    }
    if pace_mps <= 0.0 {
        return Err(Error::config("pace must be positive"));
    }
    for v in vertices {
        if !env.bounds.contains(v) {
            return Err(Error::config(format!(
                "trajectory vertex ({}, {}) outside bounds",
                v.x, v.y
            )));
        }
    }
    let mut out = Vec::with_capacity(vertices.len());
    let mut t = 0.0f64;
    out.push((vertices[0], t));
    for pair in vertices.windows(2) {
        let seg_m = pair[0].distance_tiles(&pair[1]) * TILE_METERS;
        if seg_m == 0.0 {
            return Err(Error::config("consecutive trajectory vertices must differ"));
        }
        t += seg_m / pace_mps;
        out.push((pair[1], t));
    }
    Ok(Trajectory { vertices: out, pace_mps, pace_label: pace_label.to_string() })
}

/// Sample fingerprints along a trajectory every `interval_s`, with fresh
/// noise per sample. An interval longer than the walk produces exactly one
/// sample at the start.
pub fn sample_walk(
    env: &Environment,
    trajectory: &Trajectory,
    interval_s: f64,
    orientation: OrientationMode,
    seed: u64,
) -> Result<WalkLog> {
    if interval_s <= 0.0 {
        return Err(Error::config("sample interval must be positive"));
    }
    env.validate()?;
    let t0 = trajectory.start_time();
    let t_end = trajectory.end_time();
    let mut samples = Vec::new();
    let mut step = 0u64;
    loop {
        let t = t0 + step as f64 * interval_s;
        if t > t_end + 1e-12 {
            break;
        }
        let pos = crate::replay::interpolate_truth(trajectory, t)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_indexed(seed, "walk-sample", step));
        let orientation_deg = match orientation {
            OrientationMode::Constant => SURVEY_ORIENTATION_DEG,
            OrientationMode::Changing => rng.gen_range(0.0..360.0),
        };
        let fingerprint = env.fingerprint_at(&pos, orientation_deg, &mut rng)?;
        samples.push((t, fingerprint));
        step += 1;
    }
    WalkLog::new(
        Arc::new(env.schema()?),
        samples,
        trajectory.clone(),
        orientation,
    )
}
