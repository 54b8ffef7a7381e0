use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tileloc::matrix::FeatureMatrix;
use tileloc::models::kstar::{self, KStarModel, KStarParams};
use tileloc::preprocess::{AttrNorm, Axis, FeatureView, NormMethod, NormalizationParams};

fn main() {
    for (bl, ts) in [([20.0, 50.0, 80.0], 10.0), ([20.0, 50.0, 80.0], 5.0), ([10.0, 20.0, 50.0], 10.0)] {
        let mut worst = 0.0f64;
        for case in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
            let n = rng.gen_range(2..=10usize);
            let d = rng.gen_range(1..=3usize);
            let rows: Vec<Vec<f64>> =
                (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..ts)).collect();
            let blend = bl[case as usize % 3];
            let features = FeatureMatrix::from_rows(rows.clone());
            let query: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let expected = kstar::oracle::predict(&features, &targets, &query, blend);
            let view = FeatureView {
                features: features.clone(),
                targets: targets.clone(),
                axis: Axis::X,
                norm: NormalizationParams {
                    method: NormMethod::None,
                    per_attr: (0..d).map(|_| AttrNorm { shift: 0.0, scale: 1.0 }).collect(),
                },
            };
            let model = KStarModel::train(view, KStarParams { blend_percent: blend }).unwrap();
            let got = model.predict_normalized(&query).unwrap();
            worst = worst.max((got - expected).abs());
        }
        println!("blends {bl:?} targets 0..{ts}: worst {worst:.3e}");
    }
}
