use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tileloc::matrix::FeatureMatrix;
use tileloc::models::rbf::{self, RbfParams};
use tileloc::preprocess::{AttrNorm, Axis, FeatureView, NormMethod, NormalizationParams};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xs: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0)).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| (2.0 * std::f64::consts::PI * x).sin()).collect();
    let view = FeatureView {
        features: FeatureMatrix::from_rows(xs.iter().map(|&x| vec![x]).collect()),
        targets: ys.clone(),
        axis: Axis::X,
        norm: NormalizationParams { method: NormMethod::None, per_attr: vec![AttrNorm { shift: 0.0, scale: 1.0 }] },
    };
    let model = rbf::train(&view, RbfParams { centers: 10, seed: 7, ..Default::default() }).unwrap();
    let mse: f64 = xs.iter().zip(&ys).map(|(&x, &y)| (model.predict_normalized(&[x]).unwrap() - y).powi(2)).sum::<f64>() / xs.len() as f64;
    println!("sine fixture rmse = {:.6}", mse.sqrt());
}
