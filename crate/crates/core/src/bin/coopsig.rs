use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use coopsig::fusion::{FusionModels, FusionScheme, PcaModel};
use coopsig::harness::{
    emit_report, evaluate_accuracy_by_snr, extract_features_job, load_report, pca_fit_job,
    run_suite, run_training_job, ExperimentConfig, Extractor, JobKind, Profile, SchemeClassifier,
    Suite, TrainingJob,
};
use coopsig::nn::Hyperparameters;
use coopsig::sigsynth::{derive_seed, generate_dataset, Dataset, GenerationConfig, PolicyKind};
use coopsig::util::{read_json, write_json};
use coopsig::zoo::{load_model, Pooling};

#[derive(Parser)]
#[command(
    name = "coopsig",
    version,
    about = "Cooperative modulation classification experiments"
)]
struct Cli {
    /// Run single-threaded.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a train/test dataset pair.
    Generate(GenerateArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Write per-node CNN1 or PCA features of a dataset.
    ExtractFeatures(ExtractArgs),
    /// Fit the PCA baseline on a dataset's frames.
    PcaFit(PcaArgs),
    /// Accuracy by SNR of one fusion scheme on a test set.
    Evaluate(EvaluateArgs),
    /// Build every artifact of a suite, evaluate it and write the report.
    Experiment(ExperimentArgs),
    /// Re-render a report from its summary.json.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Paper,
    Desk,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Paper => Profile::Paper,
            ProfileArg::Desk => Profile::Desk,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "desk")]
    profile: ProfileArg,
    #[arg(long, default_value_t = 1)]
    nodes: usize,
    /// Half-spread of node SNRs in dB; 0 gives equal-SNR nodes.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 2020)]
    seed: u64,
    /// GenerationConfig JSON, overriding profile, nodes and delta.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// cnn1, cnn2, cnn3 or cnn3-pca.
    #[arg(long)]
    kind: JobKind,
    /// Dataset (cnn1, cnn2) or feature file (cnn3, cnn3-pca).
    #[arg(long)]
    data: PathBuf,
    /// CNN1 or PCA model the features came from.
    #[arg(long)]
    extractor: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 2020)]
    seed: u64,
    /// Reduce CNN3's trunk with global average pooling instead of flattening
    #[arg(long)]
    gap: bool,
    #[arg(long)]
    no_train: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtractorArg {
    Cnn1,
    Pca,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long, value_enum, default_value = "cnn1")]
    extractor: ExtractorArg,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PcaArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// single, decision, signal, feature or pca.
    #[arg(long)]
    scheme: FusionScheme,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    cnn1: Option<PathBuf>,
    #[arg(long)]
    cnn2: Option<PathBuf>,
    #[arg(long)]
    cnn3: Option<PathBuf>,
    #[arg(long)]
    cnn3_pca: Option<PathBuf>,
    #[arg(long)]
    pca: Option<PathBuf>,
    /// Write the curve as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value = "fig5")]
    suite: Suite,
    #[arg(long, value_enum, default_value = "desk")]
    profile: ProfileArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Node counts for fig5, e.g. 1,2,4.
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<usize>>,
    /// ExperimentConfig JSON; flags override its suite and seed.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fail instead of training missing models.
    #[arg(long)]
    no_train: bool,
    /// Work root; artifacts go under <out>/<profile>.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    summary: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let threads = if cli.deterministic {
        Some(1)
    } else {
        std::env::var("COOPSIG_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()?;
    }
    match cli.cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Train(a) => train(a),
        Cmd::ExtractFeatures(a) => {
            let ext = match a.extractor {
                ExtractorArg::Cnn1 => Extractor::Cnn1(a.model),
                ExtractorArg::Pca => Extractor::Pca(a.model),
            };
            let meta = extract_features_job(&ext, &a.data, &a.out)?;
            println!(
                "{} samples x {} nodes x {} features -> {}",
                meta.count,
                meta.n_nodes,
                meta.feature_dim,
                a.out.display()
            );
            Ok(())
        }
        Cmd::PcaFit(a) => {
            let pca = pca_fit_job(&a.data, &a.out, false)?;
            let kept: f64 = pca.explained_variance_ratio().iter().sum();
            println!(
                "{} components keep {:.1}% of the variance",
                pca.n_components(),
                100.0 * kept
            );
            Ok(())
        }
        Cmd::Evaluate(a) => evaluate(a),
        Cmd::Experiment(a) => experiment(a),
        Cmd::Report(a) => {
            let report = load_report(&a.summary)?;
            let files = emit_report(&report, &a.out)?;
            println!("{}\n{}", files.csv.display(), files.svg.display());
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let config = match &a.config {
        Some(p) => read_json::<GenerationConfig>(p)?,
        None => {
            let policy = if a.delta == 0.0 {
                PolicyKind::Grid
            } else {
                PolicyKind::Spread {
                    delta_snr_db: a.delta,
                }
            };
            match a.profile {
                ProfileArg::Paper => GenerationConfig::paper(a.nodes, policy),
                ProfileArg::Desk => GenerationConfig::desk(a.nodes, policy),
            }
        }
    };
    let out = generate_dataset(&config, a.seed, &a.out)?;
    println!(
        "{} ({})\n{}",
        out.train.display(),
        out.fingerprint,
        out.test.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let tag = a
        .out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model")
        .to_string();
    let job = TrainingJob {
        kind: a.kind,
        train: a.data,
        extractor: a.extractor,
        out: a.out,
        hyper: Hyperparameters {
            epochs: a.epochs,
            batch_size: a.batch_size,
            seed: derive_seed(a.seed, &format!("train/{tag}")),
            ..Hyperparameters::default()
        },
        init_seed: derive_seed(a.seed, &format!("init/{tag}")),
        cnn3_pooling: if a.gap {
            Pooling::GlobalAvg
        } else {
            Pooling::Flatten
        },
        no_train: a.no_train,
    };
    let trained = run_training_job(&job)?;
    if let Some(last) = trained.history.epochs.last() {
        println!(
            "{}: epoch {} loss {:.4} train accuracy {:.3}",
            trained.path.display(),
            last.epoch + 1,
            last.loss,
            last.accuracy
        );
    }
    Ok(())
}

fn load_opt(p: &Option<PathBuf>) -> Result<Option<coopsig::zoo::Model>> {
    p.as_deref()
        .map(|p| load_model(p).with_context(|| format!("loading {}", p.display())))
        .transpose()
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let models = FusionModels {
        cnn1: load_opt(&a.cnn1)?,
        cnn2: load_opt(&a.cnn2)?,
        cnn3: load_opt(&a.cnn3)?,
        cnn3_pca: load_opt(&a.cnn3_pca)?,
        pca: a.pca.as_deref().map(PcaModel::load).transpose()?,
    };
    let data = Dataset::load(&a.data)?;
    let curve = evaluate_accuracy_by_snr(
        a.scheme.name(),
        &SchemeClassifier {
            scheme: a.scheme,
            models: &models,
        },
        &data,
    )?;
    println!("snr_db,accuracy,n_test");
    for p in &curve.points {
        println!("{},{:.4},{}", p.snr_db, p.accuracy, p.n_test);
    }
    if let Some(out) = &a.out {
        write_json(out, &curve)?;
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<ExperimentConfig>(p)?,
        None => ExperimentConfig::new(a.suite, a.profile.into()),
    };
    cfg.suite = a.suite;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.nodes {
        cfg.node_counts = n;
    }
    if cfg.suite == Suite::Custom && a.config.is_none() {
        bail!("the custom suite needs --config");
    }
    let root = a.out.join(cfg.profile.name());
    let report = run_suite(&cfg, &root, a.no_train)?;
    let files = emit_report(&report, &reports_dir(&root, cfg.suite))?;
    for g in &report.gains {
        match g.gain_db {
            Some(db) => println!(
                "{} -> {}: {:+.2} dB at {:.0}%",
                g.reference,
                g.improved,
                db,
                100.0 * g.threshold
            ),
            None => println!("{} -> {}: undefined", g.reference, g.improved),
        }
    }
    for (k, v) in &report.metrics {
        println!("{k}: {v:.4}");
    }
    println!(
        "{}\n{}\n{}",
        files.csv.display(),
        files.svg.display(),
        files.summary.display()
    );
    Ok(())
}

fn reports_dir(root: &Path, suite: Suite) -> PathBuf {
    root.join("reports").join(suite.name())
}
