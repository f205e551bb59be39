//! The three experiment suites over a shared, fingerprinted work directory.
//!
//! CNN2 and CNN3 variants train on node SNRs spread over the base grid
//! (`train_delta_snr_db`); fig5 and fig6b test on equal-SNR nodes.
//!
//! Layout under the work root: `data/<name>/{train,test}.csig`,
//! `models/*.csnn`, `features/*.csft`, `evals/*.json`, `reports/<suite>/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Suite};
use super::curve::{
    evaluate_accuracy_by_snr, gain_record, AccuracyCurve, SchemeClassifier, SnrGain,
};
use super::jobs::{
    ensure_dataset, extract_features_job, pca_fit_job, run_training_job, Extractor, JobKind,
    TrainingJob,
};
use crate::error::{Error, Result};
use crate::fusion::{overhead_per_sample, FusionModels, FusionScheme, OverheadReport, PcaModel};
use crate::nn::Hyperparameters;
use crate::sigsynth::dataset::read_meta;
use crate::sigsynth::{derive_seed, Dataset, GenerationConfig, PolicyKind};
use crate::util::{fingerprint, read_json, write_json};
use crate::zoo::{load_model, FEATURE_DIM, FRAME_LEN};

/// Default accuracy level at which SNR gains are measured.
pub const GAIN_THRESHOLD: f64 = 0.5;

/// Everything a suite run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub config_fingerprint: String,
    pub curves: Vec<AccuracyCurve>,
    pub gains: Vec<SnrGain>,
    pub overhead: OverheadReport,
    /// Named scalar summaries, e.g. fig6a's mean accuracy per spread.
    pub metrics: BTreeMap<String, f64>,
}

impl SuiteReport {
    pub fn curve(&self, scheme: &str, n_nodes: usize) -> Option<&AccuracyCurve> {
        self.curves
            .iter()
            .find(|c| c.scheme == scheme && c.n_nodes == n_nodes)
    }
}

/// Builds (or reuses) the artifacts a suite needs and evaluates it.
pub struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    root: PathBuf,
    no_train: bool,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig, root: &Path, no_train: bool) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            root: root.to_path_buf(),
            no_train,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn generation(&self, n_nodes: usize, policy: PolicyKind) -> GenerationConfig {
        GenerationConfig {
            snr_grid_db: self.cfg.snr_grid_db.clone(),
            samples_per_cell: self.cfg.samples_per_cell,
            ..GenerationConfig::paper(n_nodes, policy)
        }
    }

    fn dataset(
        &self,
        name: &str,
        n_nodes: usize,
        policy: PolicyKind,
    ) -> Result<(PathBuf, PathBuf)> {
        let seed = derive_seed(self.cfg.seed, &format!("data/{name}"));
        ensure_dataset(
            &self.generation(n_nodes, policy),
            seed,
            &self.root.join("data").join(name),
        )
    }

    /// Single-node data for CNN1 and the Single baseline.
    pub fn single(&self) -> Result<(PathBuf, PathBuf)> {
        self.dataset("single", 1, PolicyKind::Grid)
    }

    /// Equal-SNR multi-node data.
    pub fn grid(&self, n: usize) -> Result<(PathBuf, PathBuf)> {
        if n == 1 {
            return self.single();
        }
        self.dataset(&format!("grid-n{n}"), n, PolicyKind::Grid)
    }

    /// Node SNRs spread uniformly over `base ± delta`.
    pub fn spread(&self, n: usize, delta: f64) -> Result<(PathBuf, PathBuf)> {
        if delta == 0.0 {
            return self.grid(n);
        }
        self.dataset(
            &format!("spread-n{n}-d{delta}"),
            n,
            PolicyKind::Spread {
                delta_snr_db: delta,
            },
        )
    }

    fn hyper(&self, tag: &str) -> Hyperparameters {
        Hyperparameters {
            epochs: self.cfg.epochs,
            batch_size: self.cfg.batch_size,
            seed: derive_seed(self.cfg.seed, &format!("train/{tag}")),
            ..Hyperparameters::default()
        }
    }

    fn model_path(&self, name: &str) -> PathBuf {
        self.root.join("models").join(format!("{name}.csnn"))
    }

    fn train(
        &self,
        kind: JobKind,
        name: &str,
        train: PathBuf,
        extractor: Option<PathBuf>,
    ) -> Result<PathBuf> {
        let job = TrainingJob {
            kind,
            train,
            extractor,
            out: self.model_path(name),
            hyper: self.hyper(name),
            init_seed: derive_seed(self.cfg.seed, &format!("init/{name}")),
            cnn3_pooling: self.cfg.cnn3_pooling,
            no_train: self.no_train,
        };
        Ok(run_training_job(&job)?.path)
    }

    pub fn cnn1(&self) -> Result<PathBuf> {
        let (train, _) = self.single()?;
        self.train(JobKind::Cnn1, "cnn1", train, None)
    }

    /// Multi-node training data: node SNRs spread over `base ± train_delta`.
    pub fn train_data(&self, n: usize) -> Result<PathBuf> {
        Ok(self.spread(n, self.cfg.train_delta_snr_db)?.0)
    }

    pub fn cnn2(&self, n: usize) -> Result<PathBuf> {
        let train = self.train_data(n)?;
        self.train(JobKind::Cnn2, &format!("cnn2-n{n}"), train, None)
    }

    /// CNN3 trained on CNN1 features of the multi-node training data.
    pub fn cnn3(&self, n: usize) -> Result<PathBuf> {
        let cnn1 = self.cnn1()?;
        let name = format!("cnn3-n{n}");
        let feats = self
            .root
            .join("features")
            .join(format!("{name}-train.csft"));
        extract_features_job(&Extractor::Cnn1(cnn1.clone()), &self.train_data(n)?, &feats)?;
        self.train(JobKind::Cnn3, &name, feats, Some(cnn1))
    }

    /// PCA fitted on the pooled frames of the multi-node training data.
    pub fn pca(&self, n: usize) -> Result<PathBuf> {
        let out = self.root.join("models").join(format!("pca-n{n}.csnn"));
        pca_fit_job(&self.train_data(n)?, &out, self.no_train)?;
        Ok(out)
    }

    pub fn cnn3_pca(&self, n: usize) -> Result<PathBuf> {
        let pca = self.pca(n)?;
        let name = format!("cnn3pca-n{n}");
        let feats = self
            .root
            .join("features")
            .join(format!("{name}-train.csft"));
        extract_features_job(&Extractor::Pca(pca.clone()), &self.train_data(n)?, &feats)?;
        self.train(JobKind::Cnn3Pca, &name, feats, Some(pca))
    }

    /// Accuracy curve of `scheme` on a test split, cached under `evals/`
    /// by the fingerprints of the models and the data.
    pub fn curve(
        &self,
        name: &str,
        scheme: FusionScheme,
        models: &FusionModels,
        test: &Path,
    ) -> Result<AccuracyCurve> {
        let mut parts = vec![
            name.to_string(),
            scheme.name().to_string(),
            read_meta(test)?.fingerprint,
        ];
        for m in [&models.cnn1, &models.cnn2, &models.cnn3, &models.cnn3_pca]
            .into_iter()
            .flatten()
        {
            parts.push(m.fingerprint.clone().unwrap_or_default());
        }
        if let Some(p) = &models.pca {
            parts.push(fingerprint(&p.explained_variance));
        }
        let key = fingerprint(&parts);
        let path = self.root.join("evals").join(format!("{name}-{key}.json"));
        if let Ok(c) = read_json::<AccuracyCurve>(&path) {
            return Ok(c);
        }
        info!("evaluating {name} on {}", test.display());
        let data = Dataset::load(test)?;
        let curve = evaluate_accuracy_by_snr(name, &SchemeClassifier { scheme, models }, &data)?;
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| Error::io(&self.root, e))?;
        write_json(&path, &curve)?;
        Ok(curve)
    }

    fn single_curve(&self) -> Result<AccuracyCurve> {
        let models = FusionModels {
            cnn1: Some(load_model(&self.cnn1()?)?),
            ..FusionModels::default()
        };
        let (_, test) = self.single()?;
        self.curve("single", FusionScheme::Single, &models, &test)
    }
}

fn report(
    cfg: &ExperimentConfig,
    curves: Vec<AccuracyCurve>,
    gains: Vec<SnrGain>,
    n_nodes: usize,
) -> SuiteReport {
    SuiteReport {
        suite: cfg.suite,
        config: cfg.clone(),
        seed: cfg.seed,
        config_fingerprint: cfg.fingerprint(),
        curves,
        gains,
        overhead: overhead_per_sample(n_nodes, FRAME_LEN, FEATURE_DIM),
        metrics: BTreeMap::new(),
    }
}

/// Gains of `scheme` for each step along the sorted node counts; the
/// one-node reference is the Single curve.
fn doubling_gains(curves: &[AccuracyCurve], scheme: &str, counts: &[usize]) -> Vec<SnrGain> {
    let find = |n: usize| {
        let name = if n == 1 { "single" } else { scheme };
        curves.iter().find(|c| c.scheme == name && c.n_nodes == n)
    };
    counts
        .windows(2)
        .filter_map(|w| Some(gain_record(find(w[0])?, find(w[1])?, GAIN_THRESHOLD)))
        .collect()
}

fn run_fig5(r: &Runner, cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let mut counts = cfg.node_counts.clone();
    counts.sort_unstable();
    counts.dedup();
    let cnn1 = load_model(&r.cnn1()?)?;
    let mut curves = vec![r.single_curve()?];
    for &n in counts.iter().filter(|&&n| n > 1) {
        let (_, test) = r.grid(n)?;
        let models = FusionModels {
            cnn1: Some(cnn1.clone()),
            cnn2: Some(load_model(&r.cnn2(n)?)?),
            cnn3: Some(load_model(&r.cnn3(n)?)?),
            ..FusionModels::default()
        };
        for scheme in [
            FusionScheme::DecisionVote,
            FusionScheme::SignalStack,
            FusionScheme::FeatureCnn,
        ] {
            curves.push(r.curve(scheme.name(), scheme, &models, &test)?);
        }
    }
    let gains = ["decision", "signal", "feature"]
        .iter()
        .flat_map(|s| doubling_gains(&curves, s, &counts))
        .collect();
    Ok(report(cfg, curves, gains, *counts.last().unwrap()))
}

fn run_fig6a(r: &Runner, cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let n = cfg.study_nodes;
    let models = FusionModels {
        cnn1: Some(load_model(&r.cnn1()?)?),
        cnn3: Some(load_model(&r.cnn3(n)?)?),
        ..FusionModels::default()
    };
    let mut curves = vec![r.single_curve()?];
    let mut metrics = BTreeMap::new();
    for &delta in &cfg.delta_snr_db {
        let (_, test) = r.spread(n, delta)?;
        let c = r.curve(
            &format!("feature-delta{delta}"),
            FusionScheme::FeatureCnn,
            &models,
            &test,
        )?;
        if let Some(m) = c.mean_accuracy(-10.0, 0.0) {
            metrics.insert(format!("mean_accuracy_-10_0_delta{delta}"), m);
        }
        curves.push(c);
    }
    let gains = curves[1..]
        .iter()
        .map(|c| gain_record(&curves[0], c, GAIN_THRESHOLD))
        .collect();
    let mut rep = report(cfg, curves, gains, n);
    rep.metrics = metrics;
    Ok(rep)
}

fn run_fig6b(r: &Runner, cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let n = cfg.study_nodes;
    let (_, test) = r.grid(n)?;
    let pca_path = r.pca(n)?;
    let models = FusionModels {
        cnn1: Some(load_model(&r.cnn1()?)?),
        cnn3: Some(load_model(&r.cnn3(n)?)?),
        cnn3_pca: Some(load_model(&r.cnn3_pca(n)?)?),
        pca: Some(PcaModel::load(&pca_path)?),
        ..FusionModels::default()
    };
    let single = r.single_curve()?;
    let feature = r.curve("feature", FusionScheme::FeatureCnn, &models, &test)?;
    let pca = r.curve("pca", FusionScheme::FeaturePca, &models, &test)?;
    let gains = vec![
        gain_record(&single, &feature, GAIN_THRESHOLD),
        gain_record(&single, &pca, GAIN_THRESHOLD),
    ];
    let mut rep = report(cfg, vec![single, feature, pca], gains, n);
    let pca_model = models.pca.as_ref().unwrap();
    rep.metrics.insert(
        "pca_explained_variance_ratio".into(),
        pca_model.explained_variance_ratio().iter().sum(),
    );
    Ok(rep)
}

/// Runs `cfg.suite` with artifacts under `root`. With `no_train`, missing
/// or stale models are reported as `PrerequisiteMissing`.
pub fn run_suite(cfg: &ExperimentConfig, root: &Path, no_train: bool) -> Result<SuiteReport> {
    let r = Runner::new(cfg, root, no_train)?;
    match cfg.suite {
        Suite::Fig5 | Suite::Custom => run_fig5(&r, cfg),
        Suite::Fig6a => run_fig6a(&r, cfg),
        Suite::Fig6b => run_fig6b(&r, cfg),
    }
}
