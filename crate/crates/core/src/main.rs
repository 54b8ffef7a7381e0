//! Operator entry point: environment/dataset generation, training,
//! cross-validation studies, hybrid benchmarking, walk replay, and
//! plot-data export.
//!
//! Every subcommand is deterministic given its flags: randomness flows
//! from `--seed` through named derived streams. The one exception is
//! `bench --timings-out`, which records wall-clock measurements and is
//! documented as non-reproducible byte-for-byte.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use tileloc::dataset::{Dataset, GridPosition};
use tileloc::error::{Error, Result};
use tileloc::eval::{self, kfold_cv, CvConfig, EvalReport};
use tileloc::hybrid::{HybridModel, HybridParams};
use tileloc::models::{self, DataRef, LearnerSpec, PositionModel};
use tileloc::replay::{online_table_csv, replay_eval, OnlineRow, WalkLog};
use tileloc::seeds;
use tileloc::synthworld::{generate_trajectory, sample_walk, Environment, OrientationMode, Pace};

#[derive(Parser)]
#[command(
    name = "tileloc",
    version,
    about = "Indoor localization engine on a ceiling-tile grid",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for folds/trees/partitions (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic radio environment file.
    GenEnv(GenEnvArgs),
    /// Survey an environment into a dataset CSV (+ schema sidecar).
    GenData(GenDataArgs),
    /// Keep every stride-th reading of a dataset.
    Subsample(SubsampleArgs),
    /// Train one learner and persist the model document.
    Train(TrainArgs),
    /// Repeated k-fold cross-validation; emits report JSON and table CSVs.
    Cv(CvArgs),
    /// Train the partition-gated hybrid and persist its bundle.
    HybridTrain(HybridTrainArgs),
    /// Compare monolithic K* against the hybrid on latency and comparisons.
    Bench(BenchArgs),
    /// Walk a route through the world and replay it through a model.
    Replay(ReplayArgs),
    /// Export plot-ready point series (survey map, partitions, walk).
    ExportPlot(ExportPlotArgs),
}

#[derive(Args)]
struct GenEnvArgs {
    /// `library` (the ~3110-point fixture) or `open`.
    #[arg(long, default_value = "library")]
    preset: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Open-preset width/height in tiles and access-point count.
    #[arg(long, default_value_t = 102)]
    width: u32,
    #[arg(long, default_value_t = 64)]
    height: u32,
    #[arg(long, default_value_t = 21)]
    access_points: u32,
    /// Override the shadowing sigma (dB).
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    env: PathBuf,
    #[arg(long, default_value_t = 1)]
    spacing: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SubsampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    offset: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct LearnerArgs {
    /// kstar, knn, rbf, linear, zeror, forest, vote:<a>+<b>, hybrid.
    #[arg(long, default_value = "kstar")]
    learner: String,
    /// K* blend percentage in [0, 100].
    #[arg(long)]
    blend: Option<f64>,
    /// Neighbor count for knn.
    #[arg(long)]
    k_neighbors: Option<usize>,
    /// Basis-function count for rbf.
    #[arg(long)]
    centers: Option<usize>,
    /// Tree count for forest / the hybrid gate.
    #[arg(long)]
    trees: Option<usize>,
    /// Target partition population for hybrid.
    #[arg(long)]
    target_points: Option<usize>,
}

impl LearnerArgs {
    fn spec(&self) -> Result<LearnerSpec> {
        let mut spec = LearnerSpec::parse(&self.learner)?;
        match &mut spec {
            LearnerSpec::KStar { blend } => {
                if let Some(b) = self.blend {
                    *blend = b;
                }
            }
            LearnerSpec::Knn { k, .. } => {
                if let Some(kk) = self.k_neighbors {
                    *k = kk;
                }
            }
            LearnerSpec::Rbf { centers, .. } => {
                if let Some(c) = self.centers {
                    *centers = c;
                }
            }
            LearnerSpec::Forest { trees, .. } => {
                if let Some(t) = self.trees {
                    *trees = t;
                }
            }
            LearnerSpec::Hybrid { target_points, trees, blend, .. } => {
                if let Some(t) = self.target_points {
                    *target_points = t;
                }
                if let Some(t) = self.trees {
                    *trees = t;
                }
                if let Some(b) = self.blend {
                    *blend = b;
                }
            }
            _ => {}
        }
        Ok(spec)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    learner: LearnerArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    learner: LearnerArgs,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Report JSON (canonical: timing omitted, byte-reproducible).
    #[arg(long)]
    out: PathBuf,
    /// Offline-table CSV row for this run.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Baseline report JSON; writes a partial-dataset delta table.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Delta-table CSV path (requires --baseline).
    #[arg(long)]
    delta_table: Option<PathBuf>,
}

#[derive(Args)]
struct HybridTrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 450)]
    target_points: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 20.0)]
    blend: f64,
    /// Folds for the reported gate accuracy (0 skips the gate CV).
    #[arg(long, default_value_t = 10)]
    gate_cv: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 40)]
    queries: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 20.0)]
    blend: f64,
    #[arg(long, default_value_t = 450)]
    target_points: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Deterministic comparisons-per-query CSV.
    #[arg(long)]
    comparisons_out: PathBuf,
    /// Wall-clock per-query CSV (not byte-reproducible across runs).
    #[arg(long)]
    timings_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    env: PathBuf,
    /// Training dataset for the model.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    learner: LearnerArgs,
    /// slow (0.75 m/s), normal (1.15), or fast (1.69).
    #[arg(long, default_value = "normal")]
    pace: String,
    /// constant or changing device orientation.
    #[arg(long, default_value = "constant")]
    orientation: String,
    #[arg(long, default_value_t = 1.0)]
    interval: f64,
    /// Per-prediction compute delay in seconds.
    #[arg(long, default_value_t = 0.0)]
    latency: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Route vertices JSON `[[x, y], ...]`; defaults to the world's route.
    #[arg(long)]
    route: Option<PathBuf>,
    /// Error-vs-time series CSV.
    #[arg(long)]
    out: PathBuf,
    /// Write the sampled walk log (CSV + sidecar).
    #[arg(long)]
    walk_out: Option<PathBuf>,
    /// Replay an existing walk log instead of sampling a new one.
    #[arg(long)]
    walk_in: Option<PathBuf>,
    /// Append an online-results table row to this CSV.
    #[arg(long)]
    row_out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportPlotArgs {
    /// survey-map, partitions, or walk-series.
    #[arg(long)]
    kind: String,
    /// Dataset CSV (survey-map, partitions).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Target partition population (partitions).
    #[arg(long, default_value_t = 450)]
    target_points: usize,
    /// Replay series CSV to pass through (walk-series).
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // default 1: fully deterministic ordering in logs
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    match run(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("tileloc: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenEnv(args) => gen_env(args),
        Command::GenData(args) => gen_data(args),
        Command::Subsample(args) => subsample(args),
        Command::Train(args) => train(args),
        Command::Cv(args) => cv(args),
        Command::HybridTrain(args) => hybrid_train(args),
        Command::Bench(args) => bench(args),
        Command::Replay(args) => replay(args),
        Command::ExportPlot(args) => export_plot(args),
    }
}

fn gen_env(args: GenEnvArgs) -> Result<()> {
    let mut env = match args.preset.as_str() {
        "library" => Environment::library_preset(),
        "open" => Environment::open_preset(args.width, args.height, args.access_points, args.seed),
        other => {
            return Err(Error::config(format!(
                "unknown preset {other:?} (expected library or open)"
            )))
        }
    };
    if let Some(sigma) = args.sigma {
        if sigma < 0.0 {
            return Err(Error::config("sigma must be >= 0"));
        }
        env.shadowing_sigma_db = sigma;
    }
    env.validate()?;
    env.save_json(&args.out)?;
    eprintln!(
        "wrote {} ({} radios, {} obstacles, {}x{} tiles)",
        args.out.display(),
        env.radios.len(),
        env.obstacles.len(),
        env.bounds.width_tiles,
        env.bounds.height_tiles
    );
    Ok(())
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let env = Environment::load_json(&args.env)?;
    let dataset = env.generate_dataset(args.spacing, seeds::derive(args.seed, "dataset"))?;
    dataset.save_with_sidecar(&args.out)?;
    eprintln!(
        "wrote {} ({} points, {} attributes)",
        args.out.display(),
        dataset.len(),
        dataset.schema().len()
    );
    Ok(())
}

fn subsample(args: SubsampleArgs) -> Result<()> {
    let dataset = Dataset::load_csv(&args.input)?;
    let sub = dataset.subsample(args.stride, args.offset)?;
    sub.save_with_sidecar(&args.out)?;
    eprintln!("wrote {} ({} of {} points)", args.out.display(), sub.len(), dataset.len());
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let dataset = Dataset::load_csv(&args.input)?;
    let spec = args.learner.spec()?;
    let model = PositionModel::train(&spec, &dataset, args.seed)?;
    let data_ref = DataRef::for_dataset(&args.input, &dataset);
    models::save_model(&model, &spec, args.seed, Some(data_ref), &args.out)?;
    if let PositionModel::Hybrid(h) = &model {
        if let Some(acc) = h.gate_cv_accuracy() {
            eprintln!("gate cross-validated accuracy: {acc:.4}");
        }
    }
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn cv(args: CvArgs) -> Result<()> {
    if args.delta_table.is_some() && args.baseline.is_none() {
        return Err(Error::config("--delta-table requires --baseline"));
    }
    let dataset = Dataset::load_csv(&args.input)?;
    let spec = args.learner.spec()?;
    let cfg = CvConfig { k: args.k, repetitions: args.reps, base_seed: args.seed };
    let report = kfold_cv(&dataset, &spec, cfg)?;
    std::fs::write(&args.out, report.canonical_json()?).map_err(|e| Error::io(&args.out, e))?;
    eprintln!(
        "{}: x {:.3} m, y {:.3} m, absolute {:.3} m over {} predictions",
        spec.name(),
        report.mean_x_error_m,
        report.mean_y_error_m,
        report.absolute_mean_error_m,
        report.n_predictions
    );
    if let Some(t) = report.timing {
        eprintln!("mean prediction time {:.1} us (not persisted)", t.mean_us);
    }

    if let Some(path) = &args.table {
        let csv = eval::offline_table_csv(&[(
            spec.name(),
            report.mean_x_error_m,
            report.mean_y_error_m,
        )]);
        std::fs::write(path, csv).map_err(|e| Error::io(path, e))?;
    }
    if let Some(base_path) = &args.baseline {
        let body = std::fs::read(base_path).map_err(|e| Error::io(base_path, e))?;
        let baseline: EvalReport = serde_json::from_slice(&body)?;
        let delta = eval::compare_reports(&baseline, &report);
        let csv = eval::delta_table_csv(&[(
            spec.name(),
            report.mean_x_error_m,
            report.mean_y_error_m,
            delta,
        )]);
        match &args.delta_table {
            Some(path) => std::fs::write(path, csv).map_err(|e| Error::io(path, e))?,
            None => print!("{csv}"),
        }
    }
    Ok(())
}

fn hybrid_train(args: HybridTrainArgs) -> Result<()> {
    let dataset = Dataset::load_csv(&args.input)?;
    let params = HybridParams {
        target_points: args.target_points,
        gate_trees: args.trees,
        blend_percent: args.blend,
        gate_cv_folds: args.gate_cv,
        ..HybridParams::default()
    };
    let model = HybridModel::train(&dataset, params.clone(), args.seed)?;
    let pops = model.scheme().populations(&dataset);
    eprintln!(
        "partitions: {} used of {} ({} dropped), max population {}",
        model.kept_ids().len(),
        model.scheme().n_partitions(),
        model.dropped_ids().len(),
        model.max_partition_population()
    );
    eprintln!("populations: {pops:?}");
    if let Some(acc) = model.gate_cv_accuracy() {
        eprintln!("gate cross-validated accuracy: {acc:.4}");
    }
    let spec = LearnerSpec::Hybrid {
        target_points: params.target_points,
        trees: params.gate_trees,
        blend: params.blend_percent,
        gate_cv_folds: params.gate_cv_folds,
    };
    let data_ref = DataRef::for_dataset(&args.input, &dataset);
    models::save_model(
        &PositionModel::Hybrid(model),
        &spec,
        args.seed,
        Some(data_ref),
        &args.out,
    )?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let dataset = Dataset::load_csv(&args.input)?;
    let n = dataset.len();
    if args.queries < 1 || args.queries > n {
        return Err(Error::config(format!("queries must lie in 1..={n}")));
    }
    let kstar_spec = LearnerSpec::KStar { blend: args.blend };
    let monolithic = PositionModel::train(&kstar_spec, &dataset, args.seed)?;
    let hybrid_spec = LearnerSpec::Hybrid {
        target_points: args.target_points,
        trees: args.trees,
        blend: args.blend,
        gate_cv_folds: 0,
    };
    let hybrid = PositionModel::train(&hybrid_spec, &dataset, args.seed)?;

    // deterministic query sample: evenly spaced over the survey
    let step = (n / args.queries).max(1);
    let query_idx: Vec<usize> = (0..n).step_by(step).take(args.queries).collect();

    let mut comparisons = String::from("query_index,monolithic_comparisons,hybrid_comparisons\n");
    let mut timings = String::from("query_index,monolithic_us,hybrid_us\n");
    let mut mono_total_us = 0.0;
    let mut hybrid_total_us = 0.0;
    for &i in &query_idx {
        let fp = &dataset.points()[i].fingerprint;
        let started = Instant::now();
        let mono_fix = monolithic.predict(fp)?;
        let mono_us = started.elapsed().as_secs_f64() * 1e6;
        let started = Instant::now();
        let hybrid_fix = hybrid.predict(fp)?;
        let hybrid_us = started.elapsed().as_secs_f64() * 1e6;
        mono_total_us += mono_us;
        hybrid_total_us += hybrid_us;
        comparisons.push_str(&format!("{i},{},{}\n", mono_fix.comparisons, hybrid_fix.comparisons));
        timings.push_str(&format!("{i},{mono_us:.1},{hybrid_us:.1}\n"));
    }
    std::fs::write(&args.comparisons_out, comparisons)
        .map_err(|e| Error::io(&args.comparisons_out, e))?;
    if let Some(path) = &args.timings_out {
        std::fs::write(path, timings).map_err(|e| Error::io(path, e))?;
    }
    let q = args.queries as f64;
    eprintln!(
        "monolithic K*: {:.1} ms/query ({} comparisons); hybrid: {:.1} ms/query; speedup {:.1}x",
        mono_total_us / q / 1000.0,
        n,
        hybrid_total_us / q / 1000.0,
        mono_total_us / hybrid_total_us
    );
    Ok(())
}

fn load_route(path: &Path) -> Result<Vec<GridPosition>> {
    let body = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let pairs: Vec<(f64, f64)> = serde_json::from_slice(&body)?;
    Ok(pairs.into_iter().map(|(x, y)| GridPosition::new(x, y)).collect())
}

fn replay(args: ReplayArgs) -> Result<()> {
    let env = Environment::load_json(&args.env)?;
    let dataset = Dataset::load_csv(&args.data)?;
    let spec = args.learner.spec()?;
    let model = PositionModel::train(&spec, &dataset, args.seed)?;

    let log = match &args.walk_in {
        Some(path) => WalkLog::load(path)?,
        None => {
            let pace = Pace::parse(&args.pace)?;
            let orientation = OrientationMode::parse(&args.orientation)?;
            let route = match &args.route {
                Some(path) => load_route(path)?,
                None => env.default_walk_route(),
            };
            let trajectory = generate_trajectory(&env, &route, pace.mps(), pace.label())?;
            sample_walk(
                &env,
                &trajectory,
                args.interval,
                orientation,
                seeds::derive(args.seed, "walk"),
            )?
        }
    };
    if let Some(path) = &args.walk_out {
        log.save(path)?;
    }

    let report = replay_eval(&model, &log, args.latency)?;
    std::fs::write(&args.out, report.series_csv()).map_err(|e| Error::io(&args.out, e))?;
    eprintln!(
        "{} over {} samples at pace {} / orientation {}: average error {:.2} m (latency {} s)",
        spec.name(),
        report.series.len(),
        report.pace_label,
        report.orientation,
        report.average_error_m,
        report.latency_s
    );
    if let Some(path) = &args.row_out {
        let row = OnlineRow {
            algorithm: spec.name(),
            pace: report.pace_label.clone(),
            orientation: report.orientation.clone(),
            average_error_m: report.average_error_m,
        };
        let body = if path.exists() {
            let mut existing =
                String::from_utf8(std::fs::read(path).map_err(|e| Error::io(path, e))?)
                    .map_err(|_| Error::data("online table is not UTF-8"))?;
            existing.push_str(&row.format());
            existing.push('\n');
            existing
        } else {
            online_table_csv(&[row])
        };
        std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn export_plot(args: ExportPlotArgs) -> Result<()> {
    let need_input = || {
        args.input
            .clone()
            .ok_or_else(|| Error::config("--input is required for this plot kind"))
    };
    match args.kind.as_str() {
        // survey map: the collected datapoint positions
        "survey-map" => {
            let dataset = Dataset::load_csv(&need_input()?)?;
            let mut out = String::from("x,y\n");
            for p in dataset.points() {
                out.push_str(&format!("{},{}\n", p.position.x, p.position.y));
            }
            std::fs::write(&args.out, out).map_err(|e| Error::io(&args.out, e))?;
        }
        // partitions: each point with its partition id (one color per id)
        "partitions" => {
            let dataset = Dataset::load_csv(&need_input()?)?;
            let scheme = tileloc::hybrid::PartitionScheme::build(&dataset, args.target_points)?;
            let mut out = String::from("x,y,partition\n");
            for p in dataset.points() {
                out.push_str(&format!(
                    "{},{},{}\n",
                    p.position.x,
                    p.position.y,
                    scheme.partition_of(&p.position)
                ));
            }
            std::fs::write(&args.out, out).map_err(|e| Error::io(&args.out, e))?;
        }
        // walk series: predicted points, path truth, time coloring
        "walk-series" => {
            let series = args
                .series
                .ok_or_else(|| Error::config("--series is required for walk-series"))?;
            let body = std::fs::read(&series).map_err(|e| Error::io(&series, e))?;
            std::fs::write(&args.out, body).map_err(|e| Error::io(&args.out, e))?;
        }
        other => {
            return Err(Error::config(format!(
                "unknown plot kind {other:?} (expected survey-map, partitions, walk-series)"
            )))
        }
    }
    eprintln!("wrote {}", args.out.display());
    Ok(())
}
