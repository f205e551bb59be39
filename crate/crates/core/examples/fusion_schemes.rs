//! Train small models for every cooperative scheme and classify the same
//! two-node samples with each.
//!
//! cargo run --release --example fusion_schemes

use coopsig::fusion::{
    classify_batch, extract_feature_set, pca_feature_set, pca_fit, FusionModels, FusionScheme,
};
use coopsig::nn::{fit, Hyperparameters};
use coopsig::sigsynth::{generate_dataset, Dataset, GenerationConfig, ModulationType, PolicyKind};
use coopsig::zoo::{build_cnn1, build_cnn2, build_cnn3_with, Model, Pooling, FEATURE_DIM};

fn main() -> coopsig::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let small = |n_nodes, policy| GenerationConfig {
        samples_per_cell: 30,
        snr_grid_db: vec![5.0, 15.0],
        ..GenerationConfig::desk(n_nodes, policy)
    };
    let hyper = Hyperparameters {
        epochs: 3,
        batch_size: 32,
        seed: 9,
        ..Hyperparameters::default()
    };

    // stage one: a per-node classifier on single-node data
    let single = generate_dataset(&small(1, PolicyKind::Grid), 1, &dir.path().join("single"))?;
    let mut cnn1 = Model::new(build_cnn1(), 1)?;
    fit(&mut cnn1.net, &Dataset::load(&single.train)?, &hyper)?;

    // two-node data with node SNRs spread over base ± 5 dB
    let pair = generate_dataset(
        &small(2, PolicyKind::Spread { delta_snr_db: 5.0 }),
        2,
        &dir.path().join("pair"),
    )?;
    let train = Dataset::load(&pair.train)?;
    let test = Dataset::load(&pair.test)?;

    let mut cnn2 = Model::new(build_cnn2(2)?, 2)?;
    fit(&mut cnn2.net, &train, &hyper)?;

    // stage two: the fusion CNN on concatenated per-node features
    let features = extract_feature_set(&cnn1, &train.samples)?;
    let mut cnn3 = Model::new(build_cnn3_with(2, Pooling::Flatten)?, 3)?;
    fit(&mut cnn3.net, &features, &hyper)?;

    let frames: Vec<f32> = train
        .samples
        .iter()
        .flat_map(|s| s.data.iter().copied())
        .collect();
    let pca = pca_fit(&frames, 2 * train.frame_length(), FEATURE_DIM)?;
    let mut cnn3_pca = Model::new(build_cnn3_with(2, Pooling::Flatten)?, 4)?;
    fit(
        &mut cnn3_pca.net,
        &pca_feature_set(&pca, &train.samples)?,
        &hyper,
    )?;

    let models = FusionModels {
        cnn1: Some(cnn1),
        cnn2: Some(cnn2),
        cnn3: Some(cnn3),
        cnn3_pca: Some(cnn3_pca),
        pca: Some(pca),
    };
    let schemes = [
        FusionScheme::Single,
        FusionScheme::DecisionVote,
        FusionScheme::SignalStack,
        FusionScheme::FeatureCnn,
        FusionScheme::FeaturePca,
    ];
    for scheme in schemes {
        let out = classify_batch(scheme, &test.samples, &models)?;
        let correct = out
            .iter()
            .zip(&test.samples)
            .filter(|(o, s)| o.label == s.label.label())
            .count();
        println!(
            "{:>9}: {:.3} on {} test samples",
            scheme.name(),
            correct as f64 / test.len() as f64,
            test.len()
        );
    }

    let s = &test.samples[test.len() / 3];
    let vote =
        classify_batch(FusionScheme::DecisionVote, std::slice::from_ref(s), &models)?.remove(0);
    println!(
        "sample of class {} at node SNRs {:?}",
        s.label.name(),
        s.snr_db
    );
    for d in &vote.local {
        println!(
            "  node {} says {} ({:.2})",
            d.node,
            ModulationType::from_label(d.label)?.name(),
            d.top()
        );
    }
    println!("  vote: {}", ModulationType::from_label(vote.label)?.name());
    Ok(())
}
