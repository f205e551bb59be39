//! Per-node receive impairments: integer delay, carrier phase and frequency
//! offset, AWGN at a target SNR.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::waveform::{normalize_power, FrameSpec};
use crate::error::{Error, Result};

/// Carrier frequency offsets are drawn from `[-MAX_CFO, MAX_CFO]`.
pub const MAX_CFO: f64 = 0.1;
pub const MIN_SNR_DB: f64 = -20.0;
pub const MAX_SNR_DB: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeChannel {
    /// Carrier phase in radians, `[0, 2π)`.
    pub phase: f64,
    /// Normalized carrier frequency offset in cycles per sample.
    pub cfo: f64,
    /// Integer delay in samples, `[0, samples_per_symbol)`.
    pub delay: usize,
    /// `None` disables the noise term.
    pub snr_db: Option<f64>,
    /// Optional global gain applied after noise.
    #[serde(default)]
    pub gain: Option<f64>,
}

impl NodeChannel {
    pub fn identity() -> Self {
        Self {
            phase: 0.0,
            cfo: 0.0,
            delay: 0,
            snr_db: None,
            gain: None,
        }
    }

    pub fn in_range(&self, spec: &FrameSpec) -> bool {
        (0.0..2.0 * PI).contains(&self.phase)
            && self.cfo.abs() <= MAX_CFO
            && self.delay < spec.samples_per_symbol
            && self
                .snr_db
                .is_none_or(|s| (MIN_SNR_DB..=MAX_SNR_DB).contains(&s))
            && self.gain.is_none_or(|g| (0.5..=2.0).contains(&g))
    }
}

/// One node's received frame.
#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame {
    pub i: Vec<f32>,
    pub q: Vec<f32>,
}

impl IqFrame {
    pub fn new(i: Vec<f32>, q: Vec<f32>) -> Result<Self> {
        if i.len() != q.len() {
            return Err(Error::Shape(format!(
                "I has {} samples, Q has {}",
                i.len(),
                q.len()
            )));
        }
        if i.iter().chain(&q).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite IQ sample".into()));
        }
        Ok(Self { i, q })
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    fn from_complex(y: &[Complex64]) -> Self {
        Self {
            i: y.iter().map(|v| v.re as f32).collect(),
            q: y.iter().map(|v| v.im as f32).collect(),
        }
    }
}

/// Receiver AGC: `i` then `q` written into `out`, scaled so the frame has
/// unit mean power `E|y|^2 = 1`. All-zero frames pass through unchanged.
pub fn write_agc(i: &[f32], q: &[f32], out: &mut [f32]) {
    let l = i.len();
    assert!(q.len() == l && out.len() == 2 * l, "AGC shape mismatch");
    let p: f64 = i
        .iter()
        .chain(q)
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        / l.max(1) as f64;
    let g = if p > 0.0 {
        (1.0 / p.sqrt()) as f32
    } else {
        1.0
    };
    for (o, &v) in out.iter_mut().zip(i.iter().chain(q)) {
        *o = v * g;
    }
}

/// [`write_agc`] appended to a vector.
pub fn push_agc(i: &[f32], q: &[f32], out: &mut Vec<f32>) {
    let start = out.len();
    out.resize(start + 2 * i.len(), 0.0);
    write_agc(i, q, &mut out[start..]);
}

/// Crops `L` samples at the node's delay, renormalizes the crop to unit
/// power, rotates by the carrier offset, and adds circular white Gaussian
/// noise with variance `10^(-snr_db/10)`.
pub fn apply_channel<R: Rng + ?Sized>(
    x: &[Complex64],
    ch: &NodeChannel,
    spec: &FrameSpec,
    rng: &mut R,
) -> Result<IqFrame> {
    Ok(IqFrame::from_complex(&receive(x, ch, spec, rng)?))
}

pub(crate) fn receive<R: Rng + ?Sized>(
    x: &[Complex64],
    ch: &NodeChannel,
    spec: &FrameSpec,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let len = spec.frame_length();
    if x.len() < ch.delay + len {
        return Err(Error::FrameUnderrun {
            needed: ch.delay + len,
            available: x.len(),
        });
    }
    let mut y = x[ch.delay..ch.delay + len].to_vec();
    normalize_power(&mut y);
    for (n, v) in y.iter_mut().enumerate() {
        *v *= Complex64::from_polar(1.0, 2.0 * PI * ch.cfo * n as f64 + ch.phase);
    }
    if let Some(snr_db) = ch.snr_db {
        let sigma = (0.5 * 10f64.powf(-snr_db / 10.0)).sqrt();
        for v in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(sigma * re, sigma * im);
        }
    }
    if let Some(g) = ch.gain {
        y.iter_mut().for_each(|v| *v *= g);
    }
    Ok(y)
}
