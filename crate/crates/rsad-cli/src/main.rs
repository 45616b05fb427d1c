//! `rsad` — calibrate, score, and evaluate activation-space adversarial
//! detectors from the command line.
//!
//! Diagnostics go to stderr; data goes to files or stdout, so every
//! subcommand composes in a pipe. All randomness is seed-derived: rerunning
//! a command reproduces its output byte for byte, independent of
//! `--threads`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rsad::activation::{ActivationSet, TruthFlag};
use rsad::baselines::{dmd_detector_scores, lid_detector_scores};
use rsad::detector::{decide, Detector};
use rsad::metrics::{roc_curve, LabeledScore};
use rsad::projection::{jl_distortion_check, sample_ensemble, DistortionReport};
use rsad::prototype::Metric;
use rsad::rng::{derive_key, stream_normal};
use rsad::storage::{
    read_activations, read_detector, read_report, report_rows, write_activations,
    write_detector, write_report, ReportRow,
};
use rsad::synth::{generate, SyntheticConfig};

#[derive(Parser)]
#[command(
    name = "rsad",
    version,
    about = "Adversarial-example detection via random subspace analysis of activations"
)]
struct Cli {
    /// Worker threads for batch scoring (default: all cores). Results are
    /// identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit class prototypes from clean activations and persist the detector.
    Calibrate(CalibrateArgs),
    /// Score test activations and emit a CSV report.
    Score(ScoreArgs),
    /// Compute ROC/AUC from a score report with ground truth.
    Evaluate(EvaluateArgs),
    /// Grid-sweep subspace dimension and ensemble size, reporting AUC each.
    Sweep(SweepArgs),
    /// Generate synthetic calibration/test activation files.
    Synth(SynthArgs),
    /// Measure the pairwise-distance distortion of one random projection.
    JlCheck(JlCheckArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Clean, labeled activation file (.rsad).
    #[arg(long)]
    input: PathBuf,
    /// Where to write the detector file (.rsdf).
    #[arg(long)]
    out: PathBuf,
    /// Subspace dimension.
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// Ensemble size (number of random projections).
    #[arg(long = "M", default_value_t = 8)]
    ensemble_size: usize,
    /// Master seed for the projection ensembles.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Distance metric: euclidean or cosine.
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
    /// Decision threshold stored in the detector (score --alpha overrides).
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

#[derive(Args)]
struct ScoreArgs {
    /// Test activation file (.rsad).
    #[arg(long)]
    input: PathBuf,
    /// Report CSV destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Which detector to run: rsa, lid, or dmd.
    #[arg(long, default_value = "rsa")]
    detector: DetectorKind,
    /// Calibrated detector file (.rsdf); required for --detector rsa.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Clean calibration activations; required for --detector lid/dmd.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Decision threshold override (rsa default: the stored value;
    /// baselines default: 0.5).
    #[arg(long)]
    alpha: Option<f64>,
    /// Neighborhood size for the lid baseline.
    #[arg(long, default_value_t = 20)]
    knn: usize,
    /// Covariance ridge for the dmd baseline (default: scaled to the data).
    #[arg(long)]
    ridge: Option<f64>,
    /// Distance metric for the lid baseline.
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum DetectorKind {
    /// Random-subspace consistency.
    Rsa,
    /// Local intrinsic dimensionality, one-class calibrated.
    Lid,
    /// Mahalanobis distance under a pooled Gaussian, one-class calibrated.
    Dmd,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Score report CSV produced by `rsad score`.
    #[arg(long)]
    report: PathBuf,
    /// Optional destination for the ROC curve CSV (threshold,fpr,tpr).
    #[arg(long)]
    roc_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Clean, labeled calibration activation file (.rsad).
    #[arg(long)]
    calibration: PathBuf,
    /// Test activation file with ground truth (.rsad).
    #[arg(long)]
    test: PathBuf,
    /// Subspace dimensions to sweep, e.g. 8,16,32.
    #[arg(long = "k-list", value_delimiter = ',', required = true)]
    k_list: Vec<usize>,
    /// Ensemble sizes to sweep, e.g. 2,4,8.
    #[arg(long = "m-list", value_delimiter = ',', required = true)]
    m_list: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "euclidean")]
    metric: Metric,
    /// Table destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of classes.
    #[arg(long, default_value_t = 4)]
    classes: u32,
    /// Ambient dimension.
    #[arg(long, default_value_t = 128)]
    dim: usize,
    /// Clean samples per class (calibration and test each).
    #[arg(long = "per-class", default_value_t = 500)]
    per_class: usize,
    /// Distance of each class center from the origin.
    #[arg(long = "center-scale", default_value_t = 10.0)]
    center_scale: f64,
    /// Isotropic noise level.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Interpolation strength toward the wrong center, in (0, 1].
    #[arg(long, default_value_t = 0.6)]
    shift: f64,
    /// Fraction of coordinates treated as non-robust, in (0, 1].
    #[arg(long, default_value_t = 0.25)]
    nonrobust: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Calibration activations destination (.rsad).
    #[arg(long = "cal-out")]
    cal_out: PathBuf,
    /// Test activations destination (.rsad).
    #[arg(long = "test-out")]
    test_out: PathBuf,
}

#[derive(Args)]
struct JlCheckArgs {
    /// Activation file to take points from (default: synthesized Gaussians).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Number of synthetic points when no --input is given.
    #[arg(long, default_value_t = 32)]
    points: usize,
    /// Dimension of synthetic points when no --input is given.
    #[arg(long, default_value_t = 512)]
    dim: usize,
    /// Subspace dimension of the probe matrix.
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// Distortion budget in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("failed to configure the thread pool")?;
    }
    match cli.command {
        Command::Calibrate(args) => calibrate(args),
        Command::Score(args) => score(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Sweep(args) => sweep(args),
        Command::Synth(args) => synth(args),
        Command::JlCheck(args) => jl_check(args),
    }
}

fn load_activations(path: &Path, role: &str) -> Result<ActivationSet> {
    read_activations(path).with_context(|| format!("reading {role} activations from {}", path.display()))
}

fn open_out(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("creating output file {}", path.display())
    })?))
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let calibration = load_activations(&args.input, "calibration")?;
    let detector = Detector::calibrate(
        &calibration,
        args.k,
        args.ensemble_size,
        args.seed,
        args.metric,
        args.alpha,
    )?;
    write_detector(&detector, &args.out)?;
    let layer = &detector.layers()[0];
    eprintln!(
        "calibrated layer '{}': K={} d={} supports={:?} | k={} M={} seed={} metric={} alpha={} -> {}",
        layer.prototypes().layer_id,
        layer.prototypes().class_count,
        layer.prototypes().dim,
        layer.prototypes().support_counts,
        args.k,
        args.ensemble_size,
        args.seed,
        args.metric,
        args.alpha,
        args.out.display()
    );
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let test = load_activations(&args.input, "test")?;
    let rows = match args.detector {
        DetectorKind::Rsa => {
            let Some(model_path) = args.model.as_deref() else {
                bail!("--detector rsa requires --model <detector.rsdf>");
            };
            let mut detector = read_detector(model_path)
                .with_context(|| format!("reading detector from {}", model_path.display()))?;
            if let Some(alpha) = args.alpha {
                detector = detector.with_alpha(alpha)?;
            }
            let results = detector.score_batch(std::slice::from_ref(&test))?;
            report_rows(&results, &test)?
        }
        DetectorKind::Lid | DetectorKind::Dmd => {
            let Some(cal_path) = args.calibration.as_deref() else {
                bail!("baseline detectors require --calibration <clean.rsad>");
            };
            let calibration = load_activations(cal_path, "calibration")?;
            let anomaly = match args.detector {
                DetectorKind::Lid => {
                    lid_detector_scores(&calibration, &test, args.knn, args.metric)?
                }
                DetectorKind::Dmd => dmd_detector_scores(&calibration, &test, args.ridge)?,
                DetectorKind::Rsa => unreachable!(),
            };
            let alpha = args.alpha.unwrap_or(0.5);
            test.records
                .iter()
                .zip(anomaly)
                .map(|(record, score)| {
                    let consistency = 1.0 - score;
                    Ok(ReportRow {
                        sample_id: record.sample_id.clone(),
                        score,
                        consistency,
                        verdict: decide(consistency, alpha)?,
                        truth: record.truth,
                    })
                })
                .collect::<rsad::Result<Vec<_>>>()?
        }
    };

    match &args.out {
        Some(path) => write_report(&rows, open_out(path)?)?,
        None => write_report(&rows, io::stdout().lock())?,
    }
    let flagged = rows.iter().filter(|r| r.verdict).count();
    eprintln!("scored {} samples, flagged {flagged}", rows.len());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let rows = read_report(File::open(&args.report).with_context(|| {
        format!("opening report {}", args.report.display())
    })?)?;
    let mut skipped = 0usize;
    let scores: Vec<LabeledScore> = rows
        .iter()
        .filter_map(|row| match row.truth {
            TruthFlag::Clean => Some(LabeledScore {
                sample_id: row.sample_id.clone(),
                score: row.score,
                is_adversarial: false,
            }),
            TruthFlag::Adversarial => Some(LabeledScore {
                sample_id: row.sample_id.clone(),
                score: row.score,
                is_adversarial: true,
            }),
            TruthFlag::Unknown => {
                skipped += 1;
                None
            }
        })
        .collect();
    if skipped > 0 {
        eprintln!("skipped {skipped} rows with unknown ground truth");
    }
    let curve = roc_curve(&scores)?;
    if let Some(path) = &args.roc_out {
        curve.write_csv(open_out(path)?)?;
        eprintln!("wrote {} ROC points to {}", curve.points.len(), path.display());
    }
    println!("auc={}", curve.auc);
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let calibration = load_activations(&args.calibration, "calibration")?;
    let test = load_activations(&args.test, "test")?;
    if args.k_list.is_empty() || args.m_list.is_empty() {
        bail!("sweep grid is empty");
    }

    let mut lines = vec!["k,m,auc".to_string()];
    for &k in &args.k_list {
        for &m in &args.m_list {
            // Alpha plays no role in AUC; any valid value does.
            let detector =
                Detector::calibrate(&calibration, k, m, args.seed, args.metric, 0.5)?;
            let results = detector.score_batch(std::slice::from_ref(&test))?;
            let scores: Vec<LabeledScore> = results
                .iter()
                .zip(&test.records)
                .filter(|(_, record)| record.truth != TruthFlag::Unknown)
                .map(|(result, record)| LabeledScore {
                    sample_id: result.sample_id.clone(),
                    score: result.adversarial_score,
                    is_adversarial: record.truth == TruthFlag::Adversarial,
                })
                .collect();
            let area = rsad::metrics::auc(&scores)?;
            lines.push(format!("{k},{m},{area}"));
            eprintln!("swept k={k} M={m}: auc={area}");
        }
    }
    let table = lines.join("\n") + "\n";
    match &args.out {
        Some(path) => open_out(path)?.write_all(table.as_bytes())?,
        None => io::stdout().lock().write_all(table.as_bytes())?,
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let config = SyntheticConfig {
        class_count: args.classes,
        dim: args.dim,
        n_per_class: args.per_class,
        center_scale: args.center_scale,
        noise_sigma: args.sigma,
        shift_fraction: args.shift,
        nonrobust_fraction: args.nonrobust,
        seed: args.seed,
    };
    let (calibration, test) = generate(&config)?;
    write_activations(&calibration, &args.cal_out)?;
    write_activations(&test, &args.test_out)?;
    eprintln!(
        "generated {} calibration and {} test records (K={} d={} nonrobust={} of {}) -> {}, {}",
        calibration.len(),
        test.len(),
        config.class_count,
        config.dim,
        config.nonrobust_count(),
        config.dim,
        args.cal_out.display(),
        args.test_out.display()
    );
    Ok(())
}

fn jl_check(args: JlCheckArgs) -> Result<()> {
    let (points, layer_id): (Vec<Vec<f64>>, String) = match &args.input {
        Some(path) => {
            let set = load_activations(path, "input")?;
            let points = set.records.iter().map(|r| r.vector_f64()).collect();
            (points, set.layer_id)
        }
        None => {
            if args.points < 2 {
                bail!("need at least 2 points to measure pairwise distortion");
            }
            let key = derive_key(args.seed, "jl-points", 0);
            let points = (0..args.points)
                .map(|i| {
                    (0..args.dim)
                        .map(|j| stream_normal(key, (i * args.dim + j) as u64))
                        .collect()
                })
                .collect();
            (points, "jl".to_string())
        }
    };
    let Some(dim) = points.first().map(Vec::len) else {
        bail!("input contains no points");
    };
    let ensemble = sample_ensemble(args.seed, &layer_id, 1, args.k, dim)?;
    let report = jl_distortion_check(&points, &ensemble.matrices()[0], args.epsilon)?;
    print_distortion_report(&report, points.len(), args.k, dim);
    Ok(())
}

fn print_distortion_report(report: &DistortionReport, n: usize, k: usize, d: usize) {
    println!("points={n}");
    println!("ambient_dim={d}");
    println!("subspace_dim={k}");
    println!("epsilon={}", report.epsilon);
    println!("pairs={}", report.pair_count);
    println!("degenerate_pairs={}", report.degenerate_pairs);
    println!("within_bound_fraction={}", report.within_bound_fraction);
    println!("min_ratio={}", report.min_ratio);
    println!("mean_ratio={}", report.mean_ratio);
    println!("max_ratio={}", report.max_ratio);
    println!("required_dim={}", report.required_dim);
}
