//! Fingerprinted artifact jobs: datasets, training, feature extraction, PCA.
//!
//! Every job writes its fingerprint next to its output and is skipped when
//! an output with the same fingerprint already exists.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{
    extract_feature_set, pca_feature_set, pca_fit, read_features, write_features, PcaModel,
};
use crate::nn::{fit, Hyperparameters, TrainHistory, TrainSet};
use crate::sigsynth::dataset::{meta_path, read_meta};
use crate::sigsynth::{generate_dataset, push_agc, write_agc, Dataset, GenerationConfig};
use crate::util::{digest_hex, fingerprint, read_json, write_json};
use crate::zoo::{
    build_cnn1, build_cnn2, build_cnn3_with, load_model, manifest_path, save_model, Model, Pooling,
    FEATURE_DIM,
};

impl TrainSet for Dataset {
    fn len(&self) -> usize {
        self.samples.len()
    }

    /// Node-stacked IQ: `2N` channels of `L` samples.
    fn input_shape(&self) -> (usize, usize) {
        (2 * self.n_nodes(), self.frame_length())
    }

    fn label(&self, index: usize) -> usize {
        self.samples[index].label.label()
    }

    fn write_input(&self, index: usize, out: &mut [f32]) {
        let s = &self.samples[index];
        let l = self.frame_length();
        for (k, chunk) in out.chunks_mut(2 * l).enumerate() {
            let (i, q) = s.node(k);
            write_agc(i, q, chunk);
        }
    }
}

/// Generates `config` into `dir` unless a dataset with the same fingerprint
/// is already there.
pub fn ensure_dataset(
    config: &GenerationConfig,
    seed: u64,
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let train = dir.join("train.csig");
    let test = dir.join("test.csig");
    let want = fingerprint(&(config, seed));
    let cached = [&train, &test]
        .iter()
        .all(|p| p.exists() && read_meta(p).is_ok_and(|m| m.fingerprint == want));
    if cached {
        info!("dataset {} is up to date ({want})", dir.display());
    } else {
        info!(
            "generating {} samples into {}",
            config.total_samples(),
            dir.display()
        );
        // readers of `dir` never see a partially written split
        let mut staging = dir.as_os_str().to_owned();
        staging.push(".partial");
        let staging = PathBuf::from(staging);
        generate_dataset(config, seed, &staging)?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for split in [&train, &test] {
            for (from, to) in [
                (staging.join(split.file_name().unwrap()), split.clone()),
                (
                    meta_path(&staging.join(split.file_name().unwrap())),
                    meta_path(split),
                ),
            ] {
                std::fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
            }
        }
        std::fs::remove_dir(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    Ok((train, test))
}

/// Sidecar of a feature file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub extractor: String,
    pub extractor_fingerprint: String,
    pub source_fingerprint: String,
    pub n_nodes: usize,
    pub feature_dim: usize,
    pub count: usize,
    pub fingerprint: String,
}

fn dataset_fingerprint(path: &Path) -> Result<String> {
    let m = read_meta(path)?;
    Ok(format!("{}-{}", m.fingerprint, m.split.name()))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::PrerequisiteMissing(format!(
            "{what} at {}",
            path.display()
        )))
    }
}

fn model_fingerprint(path: &Path) -> Result<String> {
    let m: crate::zoo::ModelManifest = read_json(&manifest_path(path))?;
    m.fingerprint.ok_or_else(|| {
        Error::PrerequisiteMissing(format!("{} has no training fingerprint", path.display()))
    })
}

/// Which feature extractor to run over a multi-node dataset.
#[derive(Debug, Clone)]
pub enum Extractor {
    /// CNN1 model file.
    Cnn1(PathBuf),
    /// PCA model file.
    Pca(PathBuf),
}

/// Writes the per-node features of `dataset` to `out` (a `CSFT` file with
/// a `.meta.json` sidecar).
pub fn extract_features_job(
    extractor: &Extractor,
    dataset: &Path,
    out: &Path,
) -> Result<FeatureMeta> {
    require(dataset, "dataset")?;
    let source_fingerprint = dataset_fingerprint(dataset)?;
    let (name, extractor_fingerprint) = match extractor {
        Extractor::Cnn1(p) => {
            require(p, "CNN1 model")?;
            ("cnn1", model_fingerprint(p)?)
        }
        Extractor::Pca(p) => {
            require(p, "PCA model")?;
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            ("pca", digest_hex(&bytes))
        }
    };
    let fp = fingerprint(&(name, &extractor_fingerprint, &source_fingerprint));
    if let Ok(meta) = read_json::<FeatureMeta>(&meta_path(out)) {
        if meta.fingerprint == fp && out.exists() {
            info!("features {} are up to date ({fp})", out.display());
            return Ok(meta);
        }
    }
    info!(
        "extracting {name} features of {} into {}",
        dataset.display(),
        out.display()
    );
    let data = Dataset::load(dataset)?;
    let set = match extractor {
        Extractor::Cnn1(p) => extract_feature_set(&load_model(p)?, &data.samples)?,
        Extractor::Pca(p) => pca_feature_set(&PcaModel::load(p)?, &data.samples)?,
    };
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_features(out, &set)?;
    let meta = FeatureMeta {
        extractor: name.into(),
        extractor_fingerprint,
        source_fingerprint,
        n_nodes: set.n_nodes,
        feature_dim: set.feature_dim,
        count: set.labels.len(),
        fingerprint: fp,
    };
    write_json(&meta_path(out), &meta)?;
    Ok(meta)
}

/// Fits a `FEATURE_DIM`-component PCA on every node's frame of the dataset
/// (I followed by Q), pooled across nodes.
pub fn pca_fit_job(dataset: &Path, out: &Path, no_train: bool) -> Result<PcaModel> {
    require(dataset, "dataset")?;
    let fp = dataset_fingerprint(dataset)?;
    let stamp = out.with_extension("fingerprint");
    if out.exists() && std::fs::read_to_string(&stamp).is_ok_and(|s| s.trim() == fp) {
        info!("PCA model {} is up to date", out.display());
        return PcaModel::load(out);
    }
    if no_train {
        return Err(Error::PrerequisiteMissing(format!(
            "no up-to-date PCA model at {}",
            out.display()
        )));
    }
    let data = Dataset::load(dataset)?;
    let dim = 2 * data.frame_length();
    info!(
        "fitting PCA on {} frames of {dim} values",
        data.len() * data.n_nodes()
    );
    let mut rows = Vec::with_capacity(data.len() * data.n_nodes() * dim);
    for s in &data.samples {
        for k in 0..s.n_nodes() {
            let (i, q) = s.node(k);
            push_agc(i, q, &mut rows);
        }
    }
    drop(data);
    let model = pca_fit(&rows, dim, FEATURE_DIM)?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    model.save(out)?;
    std::fs::write(&stamp, fp + "\n").map_err(|e| Error::io(&stamp, e))?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    /// CNN1 on single-node IQ.
    Cnn1,
    /// CNN2 on node-stacked IQ.
    Cnn2,
    /// CNN3 on CNN1 features.
    Cnn3,
    /// CNN3 on PCA features.
    Cnn3Pca,
}

impl JobKind {
    pub fn name(self) -> &'static str {
        match self {
            JobKind::Cnn1 => "cnn1",
            JobKind::Cnn2 => "cnn2",
            JobKind::Cnn3 => "cnn3",
            JobKind::Cnn3Pca => "cnn3-pca",
        }
    }
}

impl std::str::FromStr for JobKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            JobKind::Cnn1,
            JobKind::Cnn2,
            JobKind::Cnn3,
            JobKind::Cnn3Pca,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct TrainingJob {
    pub kind: JobKind,
    /// IQ dataset for CNN1/CNN2, feature file for the CNN3 variants.
    pub train: PathBuf,
    /// Model the features came from: CNN1 for `Cnn3`, PCA for `Cnn3Pca`.
    pub extractor: Option<PathBuf>,
    pub out: PathBuf,
    pub hyper: Hyperparameters,
    pub init_seed: u64,
    pub cnn3_pooling: Pooling,
    /// Fail with `PrerequisiteMissing` instead of training.
    pub no_train: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub history: TrainHistory,
    pub path: PathBuf,
}

/// `model.csnn` → `model.history.json`.
pub fn history_path(model: &Path) -> PathBuf {
    model.with_extension("history.json")
}

/// Trains one model, or reloads it when its inputs and settings are
/// unchanged. The CNN3 variants need their extractor model and a feature
/// file produced from it.
pub fn run_training_job(job: &TrainingJob) -> Result<TrainedModel> {
    let (input_fp, features) = match job.kind {
        JobKind::Cnn1 | JobKind::Cnn2 => {
            require(&job.train, "training dataset")?;
            (dataset_fingerprint(&job.train)?, None)
        }
        JobKind::Cnn3 | JobKind::Cnn3Pca => {
            let what = if job.kind == JobKind::Cnn3 {
                "CNN1 model"
            } else {
                "PCA model"
            };
            let ext = job
                .extractor
                .as_deref()
                .ok_or_else(|| Error::PrerequisiteMissing(what.into()))?;
            require(ext, what)?;
            require(&job.train, "feature file")?;
            let meta: FeatureMeta = read_json(&meta_path(&job.train))?;
            let expected = if job.kind == JobKind::Cnn3 {
                "cnn1"
            } else {
                "pca"
            };
            if meta.extractor != expected {
                return Err(Error::PrerequisiteMissing(format!(
                    "{} holds {} features, {} needs {expected}",
                    job.train.display(),
                    meta.extractor,
                    job.kind.name()
                )));
            }
            (meta.fingerprint.clone(), Some(meta))
        }
    };
    let pooling = matches!(job.kind, JobKind::Cnn3 | JobKind::Cnn3Pca).then_some(job.cnn3_pooling);
    let fp = fingerprint(&(job.kind, &input_fp, &job.hyper, job.init_seed, pooling));
    let hist_path = history_path(&job.out);
    if job.out.exists() && hist_path.exists() {
        if let Ok(model) = load_model(&job.out) {
            if model.fingerprint.as_deref() == Some(fp.as_str()) {
                info!("{} is up to date ({fp})", job.out.display());
                return Ok(TrainedModel {
                    model,
                    history: read_json(&hist_path)?,
                    path: job.out.clone(),
                });
            }
        }
    }

    if job.no_train {
        return Err(Error::PrerequisiteMissing(format!(
            "no up-to-date {} model at {}",
            job.kind.name(),
            job.out.display()
        )));
    }
    info!("training {} into {}", job.kind.name(), job.out.display());
    let (mut model, history) = match job.kind {
        JobKind::Cnn1 | JobKind::Cnn2 => {
            let data = Dataset::load(&job.train)?;
            let spec = match (job.kind, data.n_nodes()) {
                (JobKind::Cnn1, 1) => build_cnn1(),
                (JobKind::Cnn1, n) => {
                    return Err(Error::InvalidConfig(format!(
                        "CNN1 trains on single-node data, got {n} nodes"
                    )))
                }
                (_, n) => build_cnn2(n)?,
            };
            let mut model = Model::new(spec, job.init_seed)?;
            let history = fit(&mut model.net, &data, &job.hyper)?;
            (model, history)
        }
        JobKind::Cnn3 | JobKind::Cnn3Pca => {
            let set = read_features(&job.train)?;
            let meta = features.expect("feature meta read above");
            if set.feature_dim != FEATURE_DIM || set.n_nodes != meta.n_nodes {
                return Err(Error::InvalidConfig(format!(
                    "feature file holds {} × {} features",
                    set.n_nodes, set.feature_dim
                )));
            }
            let mut model = Model::new(
                build_cnn3_with(set.n_nodes, job.cnn3_pooling)?,
                job.init_seed,
            )?;
            let history = fit(&mut model.net, &set, &job.hyper)?;
            (model, history)
        }
    };
    model.fingerprint = Some(fp);
    save_model(&model, &job.out)?;
    write_json(&hist_path, &history)?;
    Ok(TrainedModel {
        model,
        history,
        path: job.out.clone(),
    })
}
