//! Decision, signal and feature fusion across receiving nodes, the PCA
//! baseline, and payload accounting.

pub mod features;
pub mod overhead;
pub mod pca;
pub mod scheme;
pub mod vote;

pub use features::{
    extract_feature_set, pca_feature_set, read_features, write_features, FeatureSet,
};
pub use overhead::{overhead_per_sample, OverheadReport, OverheadRow};
pub use pca::{frame_vector, pca_fit, pca_project, PcaModel};
pub use scheme::{
    classify_batch, classify_features, cooperative_classify, local_decisions, node_outputs,
    stack_signals, FusionModels, FusionScheme, NodeFrames, Outcome,
};
pub use vote::{majority_vote, LocalDecision};
