//! What each node sends to the fusion node per classified sample.

use serde::{Deserialize, Serialize};

use super::scheme::FusionScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub scheme: FusionScheme,
    /// Transmitted elements per node; a complex IQ sample counts once.
    pub elements_per_node: usize,
    /// The same payload counted in real numbers.
    pub reals_per_node: usize,
    pub bytes_per_node: usize,
    /// Elements summed over all nodes.
    pub elements_total: usize,
    /// SignalStack elements divided by this scheme's (None when nothing is
    /// sent).
    pub ratio_vs_signal: Option<f64>,
    pub reals_ratio_vs_signal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub n_nodes: usize,
    pub frame_length: usize,
    pub feature_dim: usize,
    pub rows: Vec<OverheadRow>,
}

impl OverheadReport {
    pub fn row(&self, scheme: FusionScheme) -> &OverheadRow {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme)
            .expect("every scheme has a row")
    }
}

fn payload(scheme: FusionScheme, l: usize, d: usize) -> (usize, usize) {
    match scheme {
        FusionScheme::Single => (0, 0),
        FusionScheme::DecisionVote => (1, 1),
        FusionScheme::SignalStack => (l, 2 * l),
        FusionScheme::FeatureCnn | FusionScheme::FeaturePca => (d, d),
    }
}

/// Per-node and per-network payloads of every scheme for frames of `l`
/// samples and `d`-dimensional features, 4 bytes per real.
pub fn overhead_per_sample(n_nodes: usize, l: usize, d: usize) -> OverheadReport {
    let (sig_e, sig_r) = payload(FusionScheme::SignalStack, l, d);
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let rows = FusionScheme::ALL
        .into_iter()
        .map(|scheme| {
            let (e, r) = payload(scheme, l, d);
            OverheadRow {
                scheme,
                elements_per_node: e,
                reals_per_node: r,
                bytes_per_node: 4 * r,
                elements_total: e * n_nodes,
                ratio_vs_signal: ratio(sig_e, e),
                reals_ratio_vs_signal: ratio(sig_r, r),
            }
        })
        .collect();
    OverheadReport {
        n_nodes,
        frame_length: l,
        feature_dim: d,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_fusion_sends_sixteen_times_less() {
        let r = overhead_per_sample(4, 512, 32);
        assert_eq!(r.row(FusionScheme::FeatureCnn).ratio_vs_signal, Some(16.0));
        assert_eq!(r.row(FusionScheme::FeaturePca).ratio_vs_signal, Some(16.0));
        assert_eq!(
            r.row(FusionScheme::FeatureCnn).reals_ratio_vs_signal,
            Some(32.0)
        );
        assert_eq!(r.row(FusionScheme::SignalStack).bytes_per_node, 4096);
    }

    #[test]
    fn decisions_cost_one_element() {
        let r = overhead_per_sample(3, 512, 32);
        assert_eq!(r.row(FusionScheme::DecisionVote).elements_per_node, 1);
        assert_eq!(r.row(FusionScheme::Single).ratio_vs_signal, None);
    }

    #[test]
    fn totals_scale_with_nodes() {
        for n in 1..6 {
            let r = overhead_per_sample(n, 512, 32);
            for row in &r.rows {
                assert_eq!(row.elements_total, n * row.elements_per_node);
            }
        }
    }
}
