//! The three classifiers, CNN1's feature tap, and model files.

pub mod io;
pub mod model;
pub mod spec;

pub use io::{
    load_model, manifest_path, read_tensors, save_model, write_tensors, ModelManifest, NamedTensor,
};
pub use model::{extract_features, frame_tensor, Model};
pub use spec::{
    build_cnn1, build_cnn2, build_cnn3, build_cnn3_with, BlockSpec, DenseSpec, ModelKind,
    NetworkSpec, Pooling, FEATURE_DIM, FRAME_LEN,
};
