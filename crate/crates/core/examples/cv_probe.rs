use std::time::Instant;
use tileloc::eval::{kfold_cv, CvConfig};
use tileloc::models::LearnerSpec;
use tileloc::synthworld::Environment;

fn main() {
    let env = Environment::library_preset();
    let ds = env.generate_dataset(1, 42).unwrap();
    println!("dataset {} points", ds.len());
    let cfg = CvConfig { k: 10, repetitions: 1, base_seed: 42 };

    let t0 = Instant::now();
    let mono = kfold_cv(&ds, &LearnerSpec::kstar_default(), cfg).unwrap();
    println!(
        "monolithic K*: x {:.3} m, y {:.3} m, abs {:.3} m, cmp mean {:.0}/max {}, {:.1?}",
        mono.mean_x_error_m, mono.mean_y_error_m, mono.absolute_mean_error_m,
        mono.comparisons.mean, mono.comparisons.max, t0.elapsed()
    );

    let spec = LearnerSpec::Hybrid { target_points: 450, trees: 100, blend: 20.0, gate_cv_folds: 0 };
    let t0 = Instant::now();
    let hy = kfold_cv(&ds, &spec, cfg).unwrap();
    println!(
        "hybrid: x {:.3} m, y {:.3} m, abs {:.3} m, cmp mean {:.0}/max {}, {:.1?}",
        hy.mean_x_error_m, hy.mean_y_error_m, hy.absolute_mean_error_m,
        hy.comparisons.mean, hy.comparisons.max, t0.elapsed()
    );
    println!("ratio abs: {:.3}", hy.absolute_mean_error_m / mono.absolute_mean_error_m);
}
