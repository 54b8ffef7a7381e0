use tileloc::hybrid::{HybridModel, HybridParams};
use tileloc::synthworld::Environment;

fn env_with_ap_xs(xs: &[f64]) -> Environment {
    let mut env = Environment::library_preset();
    let ys = [10.0, 32.0, 54.0];
    for radio in &mut env.radios {
        let ap = radio.ap_id as usize;
        radio.x = xs[ap % 7];
        radio.y = ys[ap / 7];
    }
    env
}

fn main() {
    let cut_xs = [8.0, 23.0, 44.0, 58.0, 69.0, 80.0, 91.0];
    for (sigma, thr) in [(3.0, -92.0), (2.5, -92.0), (2.0, -92.0), (2.5, -94.0), (3.0, -94.0)] {
        let mut env = env_with_ap_xs(&cut_xs);
        env.path_loss_exponent = 3.5;
        env.shadowing_sigma_db = sigma;
        env.detection_threshold_dbm = thr;
        let ds = env.generate_dataset(1, 42).unwrap();
        let hybrid = HybridModel::train(&ds, HybridParams { gate_cv_folds: 10, ..Default::default() }, 42).unwrap();
        println!("cut-aligned sigma {sigma} thr {thr}: acc {:.4}", hybrid.gate_cv_accuracy().unwrap());
    }
}
