//! Fit the PCA feature extractor on received frames and look at how much
//! of the frame it keeps.
//!
//! cargo run --release --example pca_baseline

use coopsig::fusion::{frame_vector, pca_fit, pca_project};
use coopsig::sigsynth::{generate_dataset, Dataset, GenerationConfig, PolicyKind};
use coopsig::zoo::FEATURE_DIM;

fn main() -> coopsig::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = GenerationConfig {
        samples_per_cell: 30,
        snr_grid_db: vec![10.0],
        ..GenerationConfig::desk(1, PolicyKind::Grid)
    };
    let files = generate_dataset(&config, 5, dir.path())?;
    let data = Dataset::load(&files.train)?;
    let dim = 2 * data.frame_length();
    let rows: Vec<f32> = data
        .samples
        .iter()
        .flat_map(|s| s.data.iter().copied())
        .collect();
    let pca = pca_fit(&rows, dim, FEATURE_DIM)?;

    let ratio = pca.explained_variance_ratio();
    let mut kept = 0.0;
    for (j, r) in ratio.iter().enumerate().take(8) {
        kept += r;
        println!(
            "component {j:>2}: {:.2}% (cumulative {:.2}%)",
            100.0 * r,
            100.0 * kept
        );
    }
    println!(
        "{} components of a {dim}-value frame keep {:.1}% of the variance",
        pca.n_components(),
        100.0 * ratio.iter().sum::<f64>()
    );

    let frame = data.samples[0].frame(0);
    let x = frame_vector(&frame);
    let z = pca_project(&pca, &frame)?;
    let back = pca.reconstruct(&z.iter().map(|&v| v as f64).collect::<Vec<_>>());
    let err: f64 = x
        .iter()
        .zip(&back)
        .map(|(&a, b)| (a as f64 - b).powi(2))
        .sum::<f64>();
    let energy: f64 = x.iter().map(|&a| (a as f64).powi(2)).sum();
    println!(
        "reconstruction of one frame from {} coordinates: relative error {:.3}",
        z.len(),
        (err / energy).sqrt()
    );
    Ok(())
}
