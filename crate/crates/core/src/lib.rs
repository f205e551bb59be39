//! Cooperative radio modulation classification.
//!
//! Synthesizes multi-node modulation datasets, trains small 1-D
//! convolutional classifiers from scratch, and evaluates decision, signal
//! and feature fusion across receiving nodes.

pub mod error;
pub mod fusion;
pub mod harness;
pub mod nn;
pub mod sigsynth;
pub mod util;
pub mod zoo;

pub use error::{Error, Result};
