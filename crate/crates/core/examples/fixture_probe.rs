use std::time::Instant;
use tileloc::hybrid::{HybridModel, HybridParams, PartitionScheme};
use tileloc::models::kstar::{KStarModel, KStarParams};
use tileloc::preprocess::{preprocess, Axis, NormMethod};
use tileloc::synthworld::Environment;

fn main() {
    let env = Environment::library_preset();
    let t0 = Instant::now();
    let ds = env.generate_dataset(1, 42).unwrap();
    println!("dataset: {} points, {} attrs, gen {:.2?}", ds.len(), ds.schema().len(), t0.elapsed());

    // detection stats
    let rssi_idx = ds.schema().rssi_indices();
    let mut det = 0u64;
    for p in ds.points() {
        det += rssi_idx.iter().filter(|&&j| !p.fingerprint.is_missing(j)).count() as u64;
    }
    println!("mean detected radios per point: {:.1} / {}", det as f64 / ds.len() as f64, rssi_idx.len());

    let scheme = PartitionScheme::build(&ds, 450).unwrap();
    let pops = scheme.populations(&ds);
    println!("partitions: {} (cols {} x rows {}), pops {:?}", scheme.n_partitions(), scheme.n_cols(), scheme.n_rows(), pops);

    // monolithic K* timing (both axes as two per-axis models)
    let vx = preprocess(&ds, Axis::X, NormMethod::ZScore).unwrap();
    let vy = preprocess(&ds, Axis::Y, NormMethod::ZScore).unwrap();
    let mx = KStarModel::train(vx, KStarParams::default()).unwrap();
    let my = KStarModel::train(vy, KStarParams::default()).unwrap();
    let t0 = Instant::now();
    let n_queries = 20;
    let mut err = 0.0;
    for p in ds.points().iter().step_by(ds.len() / n_queries) {
        let px = mx.predict(&p.fingerprint).unwrap();
        let py = my.predict(&p.fingerprint).unwrap();
        err += ((px - p.position.x).powi(2) + (py - p.position.y).powi(2)).sqrt();
    }
    let mono_us = t0.elapsed().as_secs_f64() * 1e6 / n_queries as f64;
    println!("monolithic K*: {:.1} ms/query, mean train-point err {:.2} tiles", mono_us / 1000.0, err / n_queries as f64);

    let t0 = Instant::now();
    let hybrid = HybridModel::train(&ds, HybridParams { gate_cv_folds: 10, ..Default::default() }, 42).unwrap();
    println!("hybrid train {:.2?}, gate 10-fold CV accuracy: {:?}", t0.elapsed(), hybrid.gate_cv_accuracy());
    let t0 = Instant::now();
    let mut fallbacks = 0;
    let mut max_cmp = 0u64;
    for p in ds.points().iter().step_by(ds.len() / n_queries) {
        let (_, diag) = hybrid.predict(&p.fingerprint).unwrap();
        if diag.fallback { fallbacks += 1; }
        max_cmp = max_cmp.max(diag.comparisons);
    }
    let hy_us = t0.elapsed().as_secs_f64() * 1e6 / n_queries as f64;
    println!("hybrid: {:.1} ms/query, speedup {:.1}x, fallbacks {}/{}, max comparisons {}", hy_us / 1000.0, mono_us / hy_us, fallbacks, n_queries + 1, max_cmp);
}
