use std::path::Path;

use coopsig::fusion::overhead_per_sample;
use coopsig::fusion::read_features;
use coopsig::harness::{
    emit_report, evaluate_accuracy_by_snr, extract_features_job, run_training_job, AccuracyCurve,
    ExperimentConfig, Extractor, JobKind, Profile, Suite, SuiteReport, TrainingJob,
};
use coopsig::nn::Hyperparameters;
use coopsig::sigsynth::{generate_dataset, Dataset, GenerationConfig, PolicyKind, StoredSample};
use coopsig::zoo::{build_cnn1, save_model, Model, Pooling, FEATURE_DIM};
use coopsig::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config(n_nodes: usize, samples_per_cell: usize) -> GenerationConfig {
    GenerationConfig {
        snr_grid_db: vec![-10.0, 0.0, 10.0],
        samples_per_cell,
        ..GenerationConfig::desk(n_nodes, PolicyKind::Grid)
    }
}

fn tiny_dataset(dir: &Path, n_nodes: usize, samples_per_cell: usize) -> Dataset {
    let out = generate_dataset(&tiny_config(n_nodes, samples_per_cell), 7, dir).unwrap();
    Dataset::load(&out.test).unwrap()
}

#[test]
fn oracle_stub_scores_one_with_exact_quotas() {
    let dir = tempfile::tempdir().unwrap();
    let test = tiny_dataset(dir.path(), 1, 6);
    let oracle = |s: &[StoredSample]| -> Result<Vec<usize>> {
        Ok(s.iter().map(|x| x.label.label()).collect())
    };
    let curve = evaluate_accuracy_by_snr("oracle", &oracle, &test).unwrap();
    let quota = 12 * tiny_config(1, 6).test_per_cell();
    assert_eq!(curve.snrs(), [-10.0, 0.0, 10.0]);
    for p in &curve.points {
        assert_eq!(p.accuracy, 1.0);
        assert_eq!(p.n_test, quota);
    }
}

#[test]
fn random_stub_stays_in_binomial_interval() {
    let dir = tempfile::tempdir().unwrap();
    let test = tiny_dataset(dir.path(), 1, 60);
    let random = |s: &[StoredSample]| -> Result<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        Ok(s.iter().map(|_| rng.random_range(0..12)).collect())
    };
    let curve = evaluate_accuracy_by_snr("random", &random, &test).unwrap();
    let p = 1.0 / 12.0;
    for pt in &curve.points {
        // normal approximation, two-sided 99%
        let half = 2.576 * (p * (1.0 - p) / pt.n_test as f64).sqrt();
        assert!(
            (pt.accuracy - p).abs() <= half,
            "{pt:?} outside {p} ± {half}"
        );
    }
}

fn job(
    kind: JobKind,
    train: &Path,
    extractor: Option<&Path>,
    out: &Path,
    epochs: usize,
) -> TrainingJob {
    TrainingJob {
        kind,
        train: train.to_path_buf(),
        extractor: extractor.map(Path::to_path_buf),
        out: out.to_path_buf(),
        hyper: Hyperparameters {
            epochs,
            batch_size: 16,
            seed: 3,
            ..Hyperparameters::default()
        },
        init_seed: 5,
        cnn3_pooling: Pooling::GlobalAvg,
        no_train: false,
    }
}

#[test]
fn cnn3_without_cnn1_is_prerequisite_missing() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("cnn1.csnn");
    let err = run_training_job(&job(
        JobKind::Cnn3,
        &dir.path().join("feats.csft"),
        Some(&missing),
        &dir.path().join("cnn3.csnn"),
        1,
    ))
    .unwrap_err();
    assert!(matches!(err, Error::PrerequisiteMissing(_)), "{err:?}");
    let err = run_training_job(&job(
        JobKind::Cnn3,
        &missing,
        None,
        &dir.path().join("cnn3.csnn"),
        1,
    ))
    .unwrap_err();
    assert!(matches!(err, Error::PrerequisiteMissing(_)), "{err:?}");
}

#[test]
fn extracted_features_are_32_wide_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_dataset(&tiny_config(2, 3), 1, &dir.path().join("d")).unwrap();
    let cnn1 = dir.path().join("cnn1.csnn");
    let mut model = Model::new(build_cnn1(), 9).unwrap();
    model.fingerprint = Some("untrained".into());
    save_model(&model, &cnn1).unwrap();
    let feats = dir.path().join("f.csft");
    let meta = extract_features_job(&Extractor::Cnn1(cnn1.clone()), &data.test, &feats).unwrap();
    assert_eq!((meta.feature_dim, meta.n_nodes), (FEATURE_DIM, 2));
    assert_eq!(FEATURE_DIM, 32);
    let set = read_features(&feats).unwrap();
    assert_eq!(set.features.len(), set.labels.len() * 2 * 32);
    // the CNN3 stage can train on them
    let cnn3 = dir.path().join("cnn3.csnn");
    let trained = run_training_job(&job(JobKind::Cnn3, &feats, Some(&cnn1), &cnn3, 2)).unwrap();
    assert_eq!(trained.history.epochs.len(), 2);
    // a PCA-feature model cannot consume CNN1 features
    let err = run_training_job(&job(JobKind::Cnn3Pca, &feats, Some(&cnn1), &cnn3, 2)).unwrap_err();
    assert!(matches!(err, Error::PrerequisiteMissing(_)), "{err:?}");
}

#[test]
fn training_history_follows_lr_schedule_and_is_cached() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GenerationConfig {
        samples_per_cell: 3,
        snr_grid_db: vec![10.0],
        ..GenerationConfig::desk(1, PolicyKind::Grid)
    };
    let data = generate_dataset(&cfg, 2, &dir.path().join("d")).unwrap();
    let out = dir.path().join("cnn1.csnn");
    let j = job(JobKind::Cnn1, &data.train, None, &out, 12);
    let first = run_training_job(&j).unwrap();
    let lrs: Vec<f64> = first.history.epochs.iter().map(|e| e.lr).collect();
    let want: Vec<f64> = (0..12).map(|e| 0.01 * 0.5f64.powi(e / 10)).collect();
    assert_eq!(lrs, want);

    let again = run_training_job(&TrainingJob {
        no_train: true,
        ..j.clone()
    })
    .unwrap();
    assert_eq!(again.history, first.history);
    assert_eq!(again.model.fingerprint, first.model.fingerprint);
    // CNN3 pooling does not key a CNN1 job
    let other_pooling = run_training_job(&TrainingJob {
        no_train: true,
        cnn3_pooling: Pooling::Flatten,
        ..j.clone()
    })
    .unwrap();
    assert_eq!(other_pooling.model.fingerprint, first.model.fingerprint);

    let changed = TrainingJob {
        no_train: true,
        init_seed: 6,
        ..j
    };
    assert!(matches!(
        run_training_job(&changed),
        Err(Error::PrerequisiteMissing(_))
    ));
}

fn report() -> SuiteReport {
    let cfg = ExperimentConfig::new(Suite::Fig5, Profile::Desk);
    let curve = |scheme: &str, n| AccuracyCurve {
        scheme: scheme.into(),
        n_nodes: n,
        points: cfg
            .snr_grid_db
            .iter()
            .map(|&s| coopsig::harness::CurvePoint {
                snr_db: s,
                accuracy: (0.5 + s / 40.0).clamp(0.0, 1.0),
                n_test: 1200,
            })
            .collect(),
    };
    SuiteReport {
        suite: Suite::Fig5,
        seed: cfg.seed,
        config_fingerprint: cfg.fingerprint(),
        curves: vec![
            curve("single", 1),
            curve("decision", 2),
            curve("signal", 2),
            curve("feature", 2),
        ],
        gains: vec![],
        overhead: overhead_per_sample(2, 512, 32),
        metrics: Default::default(),
        config: cfg,
    }
}

#[test]
fn report_files_are_deterministic_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let r = report();
    let a = emit_report(&r, &dir.path().join("a")).unwrap();
    let b = emit_report(&r, &dir.path().join("b")).unwrap();
    for (x, y) in [(&a.csv, &b.csv), (&a.svg, &b.svg), (&a.summary, &b.summary)] {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let csv = std::fs::read_to_string(&a.csv).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("scheme,n_nodes,snr_db,accuracy,n_test")
    );
    assert_eq!(csv.lines().count(), 1 + 4 * 11);

    let svg = std::fs::read_to_string(&a.svg).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let lines = doc
        .descendants()
        .filter(|n| n.has_tag_name("polyline"))
        .count();
    assert_eq!(lines, 4);
    let meta = doc
        .descendants()
        .find(|n| n.has_tag_name("metadata"))
        .unwrap();
    assert!(meta.text().unwrap().contains(&format!("seed={}", r.seed)));
    assert!(meta.text().unwrap().contains(&r.config_fingerprint));
}
