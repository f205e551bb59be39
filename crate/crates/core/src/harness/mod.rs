//! Experiment orchestration: configs, artifact jobs, accuracy curves, SNR
//! gains and reports.

pub mod config;
pub mod curve;
pub mod jobs;
pub mod report;
pub mod suite;

pub use config::{ExperimentConfig, Profile, Suite};
pub use curve::{
    curve_from_predictions, evaluate_accuracy_by_snr, gain_record, snr_gain, spearman,
    threshold_crossing, AccuracyCurve, Classifier, CurvePoint, SchemeClassifier, SnrGain,
};
pub use jobs::{
    ensure_dataset, extract_features_job, history_path, pca_fit_job, run_training_job, Extractor,
    FeatureMeta, JobKind, TrainedModel, TrainingJob,
};
pub use report::{emit_report, load_report, render_csv, render_svg, ReportFiles, CSV_HEADER};
pub use suite::{run_suite, Runner, SuiteReport, GAIN_THRESHOLD};
