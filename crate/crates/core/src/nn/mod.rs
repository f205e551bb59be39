//! Minimal deterministic engine for 1-D convolutional classifiers.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use layers::{LayerSpec, Param};
pub use loss::softmax_xent;
pub use network::{Architecture, Network, NodeSpec};
pub use optim::{lr_at_epoch, sgd_momentum_step, Hyperparameters};
pub use scalar::Real;
pub use tensor::Tensor3;
pub use train::{fit, predict, predict_set, ArraySet, EpochRecord, TrainHistory, TrainSet};
