//! Synthesize a small two-node dataset and inspect a few samples.
//!
//! cargo run --example generate_dataset -- [out_dir]

use coopsig::sigsynth::{
    generate_cooperative_sample, generate_dataset, Dataset, FrameSpec, GenerationConfig,
    ModulationType, PolicyKind, SnrPolicy,
};

fn main() -> coopsig::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/example-data".into());

    // one sample, two nodes with SNRs spread over 0 ± 10 dB
    let policy = SnrPolicy::Spread {
        base_snr_db: 0.0,
        delta_snr_db: 10.0,
    };
    let s = generate_cooperative_sample(
        ModulationType::Qam16,
        2,
        policy,
        &FrameSpec::default(),
        42,
        0,
    )?;
    for (frame, ch) in s.frames.iter().zip(&s.channels) {
        let power: f64 = frame
            .i
            .iter()
            .zip(&frame.q)
            .map(|(&i, &q)| (i * i + q * q) as f64)
            .sum::<f64>()
            / frame.len() as f64;
        println!(
            "{}: snr {:+.1} dB, cfo {:+.4}, delay {}, mean power {:.3}",
            s.label.name(),
            ch.snr_db.unwrap_or(f64::NAN),
            ch.cfo,
            ch.delay,
            power
        );
    }

    let config = GenerationConfig {
        samples_per_cell: 6,
        snr_grid_db: vec![-10.0, 0.0, 10.0],
        ..GenerationConfig::desk(2, PolicyKind::Grid)
    };
    let files = generate_dataset(&config, 7, out.as_ref())?;
    let test = Dataset::load(&files.test)?;
    println!(
        "wrote {} ({} test samples, {} nodes, frame {}) fingerprint {}",
        files.train.display(),
        test.len(),
        test.n_nodes(),
        test.frame_length(),
        files.fingerprint
    );
    for k in [0, test.len() / 2, test.len() - 1] {
        let x = &test.samples[k];
        println!(
            "  #{k}: {} at base {} dB, node SNRs {:?}",
            x.label.name(),
            test.base_snr_db(k)?,
            x.snr_db
        );
    }
    Ok(())
}
