use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::channel::{apply_channel, IqFrame, NodeChannel, MAX_CFO, MAX_SNR_DB, MIN_SNR_DB};
use super::modulation::ModulationType;
use super::waveform::{synthesize_baseband, FrameSpec, TransmitRealization};
use crate::error::{Error, Result};

pub const MIN_ROLLOFF: f64 = 0.2;
pub const MAX_ROLLOFF: f64 = 0.7;
/// Largest spread half-width; keeps pairwise node SNR differences ≤ 20 dB.
pub const MAX_DELTA_SNR_DB: f64 = 10.0;

/// How node SNRs are chosen for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrPolicy {
    /// Every node at the same SNR.
    Grid { snr_db: f64 },
    /// Each node uniform in `[base − delta, base + delta]`, clamped to the
    /// supported SNR range.
    Spread { base_snr_db: f64, delta_snr_db: f64 },
}

impl SnrPolicy {
    pub fn base_snr_db(&self) -> f64 {
        match *self {
            SnrPolicy::Grid { snr_db } => snr_db,
            SnrPolicy::Spread { base_snr_db, .. } => base_snr_db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let base = self.base_snr_db();
        if !(MIN_SNR_DB..=MAX_SNR_DB).contains(&base) {
            return Err(Error::InvalidConfig(format!(
                "SNR {base} dB outside [-20, 20]"
            )));
        }
        if let SnrPolicy::Spread { delta_snr_db, .. } = *self {
            if !(0.0..=MAX_DELTA_SNR_DB).contains(&delta_snr_db) {
                return Err(Error::InvalidConfig(format!(
                    "delta SNR {delta_snr_db} dB outside [0, {MAX_DELTA_SNR_DB}]"
                )));
            }
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SnrPolicy::Grid { snr_db } => snr_db,
            SnrPolicy::Spread {
                base_snr_db,
                delta_snr_db,
            } => {
                let u: f64 = rng.random();
                let s = base_snr_db - delta_snr_db + 2.0 * delta_snr_db * u;
                s.clamp(MIN_SNR_DB, MAX_SNR_DB)
            }
        }
    }
}

/// N receptions of one transmitted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CooperativeSample {
    pub label: ModulationType,
    pub frames: Vec<IqFrame>,
    pub channels: Vec<NodeChannel>,
    pub shared: TransmitRealization,
}

impl CooperativeSample {
    pub fn n_nodes(&self) -> usize {
        self.frames.len()
    }

    pub fn snrs_db(&self) -> Vec<f64> {
        self.channels
            .iter()
            .map(|c| c.snr_db.unwrap_or(f64::INFINITY))
            .collect()
    }

    /// Checks the structural invariants of a generated sample.
    pub fn check(&self, spec: &FrameSpec) -> Result<()> {
        if self.frames.is_empty() || self.frames.len() != self.channels.len() {
            return Err(Error::Shape(format!(
                "{} frames for {} channels",
                self.frames.len(),
                self.channels.len()
            )));
        }
        if let Some(f) = self.frames.iter().find(|f| f.len() != spec.frame_length()) {
            return Err(Error::Shape(format!("frame of length {}", f.len())));
        }
        if let Some(ch) = self.channels.iter().find(|c| !c.in_range(spec)) {
            return Err(Error::InvalidConfig(format!(
                "channel out of range: {ch:?}"
            )));
        }
        let snrs: Vec<f64> = self.channels.iter().filter_map(|c| c.snr_db).collect();
        if let (Some(lo), Some(hi)) = (
            snrs.iter().copied().reduce(f64::min),
            snrs.iter().copied().reduce(f64::max),
        ) {
            if hi - lo > 2.0 * MAX_DELTA_SNR_DB + 1e-9 {
                return Err(Error::InvalidConfig(format!("SNR spread {} dB", hi - lo)));
            }
        }
        Ok(())
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent ChaCha8 stream from a seed and a stream index.
/// Generation order never affects the output of a given index.
pub fn derive_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut mixed = index.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mut state = seed ^ splitmix64(&mut mixed);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Mixes a seed with a tag so unrelated consumers never share streams.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut state = seed;
    let mut h = splitmix64(&mut state);
    for b in tag.bytes() {
        state ^= b as u64;
        h ^= splitmix64(&mut state);
    }
    h
}

/// Draws cooperative samples for fixed channel settings.
#[derive(Debug, Clone, Copy)]
pub struct SampleGenerator {
    pub n_nodes: usize,
    pub policy: SnrPolicy,
    pub frame: FrameSpec,
    pub random_gain: bool,
    pub seed: u64,
}

impl SampleGenerator {
    pub fn new(n_nodes: usize, policy: SnrPolicy, frame: FrameSpec, seed: u64) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidNodeCount(0));
        }
        policy.validate()?;
        frame.validate()?;
        Ok(Self {
            n_nodes,
            policy,
            frame,
            random_gain: false,
            seed,
        })
    }

    fn draw_channel<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeChannel {
        NodeChannel {
            phase: rng.random_range(0.0..2.0 * PI),
            cfo: rng.random_range(-MAX_CFO..=MAX_CFO),
            delay: rng.random_range(0..self.frame.samples_per_symbol),
            snr_db: Some(self.policy.draw(rng)),
            gain: self.random_gain.then(|| rng.random_range(0.5..=2.0)),
        }
    }

    /// Sample `index` of class `label`; a pure function of `(seed, index)`
    /// and the generator settings.
    pub fn sample(&self, label: ModulationType, index: u64) -> Result<CooperativeSample> {
        let mut rng = derive_rng(self.seed, index);
        let shared = TransmitRealization {
            modulation: label,
            rolloff: rng.random_range(MIN_ROLLOFF..=MAX_ROLLOFF),
            symbol_indices: (0..self.frame.symbols_needed())
                .map(|_| rng.random_range(0..label.order()))
                .collect(),
        };
        let x = synthesize_baseband(&shared, &self.frame)?;
        let mut frames = Vec::with_capacity(self.n_nodes);
        let mut channels = Vec::with_capacity(self.n_nodes);
        for _ in 0..self.n_nodes {
            let ch = self.draw_channel(&mut rng);
            frames.push(apply_channel(&x, &ch, &self.frame, &mut rng)?);
            channels.push(ch);
        }
        Ok(CooperativeSample {
            label,
            frames,
            channels,
            shared,
        })
    }
}

/// One-shot form of [`SampleGenerator::sample`].
pub fn generate_cooperative_sample(
    label: ModulationType,
    n_nodes: usize,
    policy: SnrPolicy,
    spec: &FrameSpec,
    seed: u64,
    index: u64,
) -> Result<CooperativeSample> {
    SampleGenerator::new(n_nodes, policy, *spec, seed)?.sample(label, index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_sample_is_valid() {
        let spec = FrameSpec::default();
        let s = generate_cooperative_sample(
            ModulationType::Qam16,
            1,
            SnrPolicy::Grid { snr_db: 10.0 },
            &spec,
            7,
            0,
        )
        .unwrap();
        s.check(&spec).unwrap();
        assert_eq!(s.n_nodes(), 1);
        assert_eq!(s.snrs_db(), vec![10.0]);
        assert!(s.shared.symbol_indices.len() >= spec.symbols_per_frame + spec.filter_span);
        assert!((MIN_ROLLOFF..=MAX_ROLLOFF).contains(&s.shared.rolloff));
    }

    #[test]
    fn spread_respects_range_and_cap() {
        let spec = FrameSpec::default();
        let gen = SampleGenerator::new(
            4,
            SnrPolicy::Spread {
                base_snr_db: 0.0,
                delta_snr_db: 10.0,
            },
            spec,
            99,
        )
        .unwrap();
        for k in 0..200 {
            let s = gen.sample(ModulationType::Bpsk, k).unwrap();
            s.check(&spec).unwrap();
            for snr in s.snrs_db() {
                assert!((-10.0..=10.0).contains(&snr));
            }
        }
    }

    #[test]
    fn same_seed_and_index_is_bit_identical() {
        let spec = FrameSpec::default();
        let p = SnrPolicy::Spread {
            base_snr_db: -4.0,
            delta_snr_db: 5.0,
        };
        let a = generate_cooperative_sample(ModulationType::Fsk8, 3, p, &spec, 1234, 17).unwrap();
        let b = generate_cooperative_sample(ModulationType::Fsk8, 3, p, &spec, 1234, 17).unwrap();
        assert_eq!(a, b);
        let c = generate_cooperative_sample(ModulationType::Fsk8, 3, p, &spec, 1234, 18).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn channel_parameters_stay_in_range() {
        let spec = FrameSpec::default();
        let gen = SampleGenerator {
            random_gain: true,
            ..SampleGenerator::new(
                1,
                SnrPolicy::Spread {
                    base_snr_db: 15.0,
                    delta_snr_db: 10.0,
                },
                spec,
                5,
            )
            .unwrap()
        };
        let mut rng = derive_rng(5, 0);
        for _ in 0..10_000 {
            let ch = gen.draw_channel(&mut rng);
            assert!(ch.in_range(&spec), "{ch:?}");
        }
        for k in 0..50 {
            let s = gen.sample(ModulationType::Pam4, k).unwrap();
            assert!(s.channels.iter().all(|c| c.in_range(&spec)));
        }
    }

    #[test]
    fn rejects_bad_policies() {
        let spec = FrameSpec::default();
        assert!(SampleGenerator::new(0, SnrPolicy::Grid { snr_db: 0.0 }, spec, 0).is_err());
        assert!(SampleGenerator::new(
            2,
            SnrPolicy::Spread {
                base_snr_db: 0.0,
                delta_snr_db: 12.0
            },
            spec,
            0
        )
        .is_err());
        assert!(SampleGenerator::new(2, SnrPolicy::Grid { snr_db: 30.0 }, spec, 0).is_err());
    }
}
