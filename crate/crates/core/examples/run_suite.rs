//! Run a scaled-down fig5 suite end to end (data, training, evaluation,
//! report) and reuse every artifact on a second run.
//!
//! cargo run --release --example run_suite -- [work_dir]

use coopsig::harness::{emit_report, run_suite, ExperimentConfig, Profile, Suite};
use coopsig::sigsynth::dataset::snr_grid;

fn main() -> coopsig::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let root = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/example-suite".into());
    let root = std::path::Path::new(&root);

    let cfg = ExperimentConfig {
        node_counts: vec![1, 2],
        snr_grid_db: snr_grid(-10.0, 20.0, 10.0),
        samples_per_cell: 24,
        epochs: 2,
        batch_size: 32,
        ..ExperimentConfig::new(Suite::Fig5, Profile::Desk)
    };
    let report = run_suite(&cfg, root, false)?;
    for c in &report.curves {
        let acc: Vec<String> = c
            .points
            .iter()
            .map(|p| format!("{:.2}", p.accuracy))
            .collect();
        println!("{:<16} {}", c.id(), acc.join(" "));
    }
    for g in &report.gains {
        println!("{} -> {}: {:?} dB", g.reference, g.improved, g.gain_db);
    }

    // everything is cached now; this only re-reads the artifacts
    let again = run_suite(&cfg, root, true)?;
    assert_eq!(again, report);
    let files = emit_report(&report, &root.join("reports").join("fig5"))?;
    println!("{}\n{}", files.csv.display(), files.svg.display());
    Ok(())
}
