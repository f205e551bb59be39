//! Labeled single- and multi-node modulation signal synthesis.

pub mod channel;
pub mod dataset;
pub mod modulation;
pub mod sample;
pub mod waveform;

pub use channel::{apply_channel, push_agc, write_agc, IqFrame, NodeChannel};
pub use dataset::{
    generate_dataset, read_dataset, Dataset, DatasetHeader, DatasetMeta, GenerationConfig,
    PolicyKind, Split, StoredSample,
};
pub use modulation::{map_symbols, Family, MappedSymbols, ModulationType, NUM_CLASSES};
pub use sample::{
    derive_rng, derive_seed, generate_cooperative_sample, CooperativeSample, SampleGenerator,
    SnrPolicy,
};
pub use waveform::{synthesize_baseband, FrameSpec, TransmitRealization};
