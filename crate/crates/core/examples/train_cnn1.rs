//! Train the single-node classifier on a small dataset and report
//! held-out accuracy by SNR.
//!
//! cargo run --release --example train_cnn1 -- [epochs]

use coopsig::fusion::{FusionModels, FusionScheme};
use coopsig::harness::{evaluate_accuracy_by_snr, SchemeClassifier};
use coopsig::nn::{fit, Hyperparameters};
use coopsig::sigsynth::{generate_dataset, Dataset, GenerationConfig, PolicyKind};
use coopsig::zoo::{build_cnn1, save_model, Model};

fn main() -> coopsig::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let epochs = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(4);
    let dir = tempfile::tempdir().expect("temp dir");

    let config = GenerationConfig {
        samples_per_cell: 45,
        snr_grid_db: vec![0.0, 10.0, 20.0],
        ..GenerationConfig::desk(1, PolicyKind::Grid)
    };
    let files = generate_dataset(&config, 1, dir.path())?;
    let train = Dataset::load(&files.train)?;
    let test = Dataset::load(&files.test)?;

    let mut cnn1 = Model::new(build_cnn1(), 2)?;
    println!("CNN1: {} parameters", cnn1.net.param_count());
    let hyper = Hyperparameters {
        epochs,
        batch_size: 32,
        seed: 3,
        ..Hyperparameters::default()
    };
    let history = fit(&mut cnn1.net, &train, &hyper)?;
    for e in &history.epochs {
        println!(
            "epoch {:>2}  lr {:.4}  loss {:.3}  train acc {:.3}",
            e.epoch, e.lr, e.loss, e.accuracy
        );
    }

    let path = dir.path().join("cnn1.csnn");
    save_model(&cnn1, &path)?;
    let models = FusionModels {
        cnn1: Some(cnn1),
        ..FusionModels::default()
    };
    let classifier = SchemeClassifier {
        scheme: FusionScheme::Single,
        models: &models,
    };
    let curve = evaluate_accuracy_by_snr("single", &classifier, &test)?;
    for p in &curve.points {
        println!(
            "{:>5} dB  accuracy {:.3}  ({} test samples)",
            p.snr_db, p.accuracy, p.n_test
        );
    }
    println!("saved to {}", path.display());
    Ok(())
}
