//! Per-sample payload each node sends to the fusion node under every scheme.
//!
//! cargo run --example overhead -- [nodes]

use coopsig::fusion::overhead_per_sample;
use coopsig::zoo::{FEATURE_DIM, FRAME_LEN};

fn main() {
    let n = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(4);
    let report = overhead_per_sample(n, FRAME_LEN, FEATURE_DIM);
    println!("{n} nodes, frame {FRAME_LEN}, features {FEATURE_DIM}");
    println!(
        "{:>9} {:>10} {:>8} {:>8} {:>10}",
        "scheme", "elements", "reals", "bytes", "vs signal"
    );
    for r in &report.rows {
        let ratio = r
            .ratio_vs_signal
            .map_or("-".to_string(), |v| format!("{v:.1}x"));
        println!(
            "{:>9} {:>10} {:>8} {:>8} {:>10}",
            r.scheme.name(),
            r.elements_per_node,
            r.reals_per_node,
            r.bytes_per_node,
            ratio
        );
    }
}
