//! Baseband waveform synthesis: raised-cosine shaping for linear families,
//! continuous-phase tones for FSK.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::modulation::{map_symbols, Family, MappedSymbols, ModulationType};
use crate::error::{Error, Result};

/// Spacing between adjacent FSK tones in cycles per sample.
pub const FSK_TONE_SPACING: f64 = 1.0 / 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub symbols_per_frame: usize,
    pub samples_per_symbol: usize,
    /// Pulse-shaping support in symbols.
    pub filter_span: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            symbols_per_frame: 64,
            samples_per_symbol: 8,
            filter_span: 8,
        }
    }
}

impl FrameSpec {
    pub fn frame_length(&self) -> usize {
        self.symbols_per_frame * self.samples_per_symbol
    }

    /// Symbols a transmitter has to draw: frame, filter support, one symbol
    /// of slack for the delay crop.
    pub fn symbols_needed(&self) -> usize {
        self.symbols_per_frame + self.filter_span + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.symbols_per_frame == 0 || self.samples_per_symbol < 2 {
            return Err(Error::InvalidConfig(format!(
                "degenerate frame spec {self:?}"
            )));
        }
        if self.filter_span % 2 != 0 || self.samples_per_symbol % 2 != 0 {
            return Err(Error::InvalidConfig(
                "filter span and samples per symbol must be even".into(),
            ));
        }
        Ok(())
    }
}

/// The transmitted frame shared by every node of a cooperative sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitRealization {
    pub modulation: ModulationType,
    pub symbol_indices: Vec<usize>,
    pub rolloff: f64,
}

/// Raised-cosine pulse evaluated at `t` symbol periods.
pub fn raised_cosine(t: f64, rolloff: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let sinc = (PI * t).sin() / (PI * t);
    let denom = 1.0 - (2.0 * rolloff * t).powi(2);
    if denom.abs() < 1e-10 {
        return PI / 4.0 * sinc_at(1.0 / (2.0 * rolloff));
    }
    sinc * (PI * rolloff * t).cos() / denom
}

fn sinc_at(t: f64) -> f64 {
    (PI * t).sin() / (PI * t)
}

/// Truncated raised-cosine taps spanning `span` symbols (`span·sps + 1`
/// taps). Each polyphase branch (taps `p, p + sps, …`) is rescaled to sum to
/// one, so the truncated pulse still sums to unity over symbol shifts and
/// the filter has unit DC gain after upsampling. The outermost tap shares
/// phase 0 with the centre tap; it is zero before truncation and stays so.
pub fn raised_cosine_taps(rolloff: f64, sps: usize, span: usize) -> Vec<f64> {
    let half = (span * sps / 2) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|n| raised_cosine(n as f64 / sps as f64, rolloff))
        .collect();
    for phase in 0..sps {
        let sum: f64 = taps.iter().skip(phase).step_by(sps).sum();
        if sum.abs() > 1e-12 {
            taps.iter_mut()
                .skip(phase)
                .step_by(sps)
                .for_each(|t| *t /= sum);
        }
    }
    taps
}

/// Unnormalized I and Q rails before power normalization. Output sample `n`
/// sits at absolute time `n + span·sps/2`, symbol `k` at `k·sps`.
pub(crate) fn shape_rails(tx: &TransmitRealization, spec: &FrameSpec) -> Result<Vec<Complex64>> {
    spec.validate()?;
    let n_sym = tx.symbol_indices.len();
    let needed = spec.symbols_needed();
    if n_sym < needed {
        return Err(Error::FrameUnderrun {
            needed: needed * spec.samples_per_symbol,
            available: n_sym * spec.samples_per_symbol,
        });
    }
    let sps = spec.samples_per_symbol;
    let half = spec.filter_span * sps / 2;
    let out_len = (n_sym - spec.filter_span) * sps;

    match map_symbols(tx.modulation, &tx.symbol_indices)? {
        MappedSymbols::Points(points) => {
            let taps = raised_cosine_taps(tx.rolloff, sps, spec.filter_span);
            let q_delay = if tx.modulation.family() == Family::Oqpsk {
                sps / 2
            } else {
                0
            };
            let shape = |abs_t: isize, rail: fn(&Complex64) -> f64| -> f64 {
                // symbols whose pulse covers abs_t
                let lo = (abs_t - half as isize).max(0);
                let hi = abs_t + half as isize;
                let k_lo = (lo + sps as isize - 1) / sps as isize;
                let k_hi = (hi / sps as isize).min(n_sym as isize - 1);
                let mut acc = 0.0;
                for k in k_lo..=k_hi {
                    let tap = (abs_t - k * sps as isize + half as isize) as usize;
                    acc += rail(&points[k as usize]) * taps[tap];
                }
                acc
            };
            Ok((0..out_len)
                .map(|n| {
                    let abs_t = (n + half) as isize;
                    Complex64::new(
                        shape(abs_t, |p| p.re),
                        shape(abs_t - q_delay as isize, |p| p.im),
                    )
                })
                .collect())
        }
        MappedSymbols::Tones(tones) => {
            let order = tx.modulation.order() as f64;
            let mut phase = 0.0f64;
            let mut full = Vec::with_capacity(n_sym * sps);
            for &tone in &tones {
                let freq = (tone as f64 - (order - 1.0) / 2.0) * FSK_TONE_SPACING;
                for _ in 0..sps {
                    full.push(Complex64::from_polar(1.0, phase));
                    phase = (phase + 2.0 * PI * freq).rem_euclid(2.0 * PI);
                }
            }
            Ok(full[half..half + out_len].to_vec())
        }
    }
}

/// Synthesizes the transmitted baseband sequence, normalized to unit mean
/// power. The result has `L + sps` or more samples so a receiver can crop a
/// delayed frame.
pub fn synthesize_baseband(tx: &TransmitRealization, spec: &FrameSpec) -> Result<Vec<Complex64>> {
    let mut x = shape_rails(tx, spec)?;
    normalize_power(&mut x);
    Ok(x)
}

pub(crate) fn mean_power(x: &[Complex64]) -> f64 {
    x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len().max(1) as f64
}

pub(crate) fn normalize_power(x: &mut [Complex64]) {
    let p = mean_power(x);
    if p > 0.0 {
        let s = 1.0 / p.sqrt();
        x.iter_mut().for_each(|v| *v *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tx(m: ModulationType, symbols: Vec<usize>, rolloff: f64) -> TransmitRealization {
        TransmitRealization {
            modulation: m,
            symbol_indices: symbols,
            rolloff,
        }
    }

    #[test]
    fn rc_is_nyquist() {
        for &a in &[0.2, 0.35, 0.5, 0.7] {
            assert_eq!(raised_cosine(0.0, a), 1.0);
            for k in 1..6 {
                assert!(raised_cosine(k as f64, a).abs() < 1e-12);
            }
            // removable singularity is continuous
            let t0 = 1.0 / (2.0 * a);
            let near = raised_cosine(t0 + 1e-7, a);
            assert!((near - raised_cosine(t0, a)).abs() < 1e-5);
        }
    }

    #[test]
    fn rc_partition_of_unity_over_interior() {
        // Σ_k p(n − k·sps) over shifted copies of the truncated taps
        let spec = FrameSpec::default();
        for &a in &[0.2, 0.45, 0.7] {
            let taps = raised_cosine_taps(a, 8, spec.filter_span);
            for phase in 0..8 {
                let s: f64 = taps.iter().skip(phase).step_by(8).sum();
                assert!((s - 1.0).abs() < 1e-3, "alpha {a} phase {phase}: {s}");
            }
            // Nyquist zeros survive the rescaling
            assert!((taps[32] - 1.0).abs() < 1e-12);
            for k in 1..=4 {
                assert!(taps[32 + 8 * k].abs() < 1e-12 && taps[32 - 8 * k].abs() < 1e-12);
            }
            // shape stays within a few percent of the untruncated pulse
            for (n, t) in taps.iter().enumerate() {
                let ideal = raised_cosine((n as f64 - 32.0) / 8.0, a);
                assert!((t - ideal).abs() < 0.05, "alpha {a} tap {n}");
            }
        }
    }

    #[test]
    fn constant_qpsk_reproduces_the_point() {
        let spec = FrameSpec::default();
        let n = spec.symbols_needed();
        let target = ModulationType::Qpsk.constellation()[2];
        for &a in &[0.2, 0.5, 0.7] {
            let x = synthesize_baseband(&tx(ModulationType::Qpsk, vec![2; n], a), &spec).unwrap();
            assert!(x.len() >= spec.frame_length() + spec.samples_per_symbol);
            for v in &x {
                assert!((v - target).norm() < 1e-3, "alpha {a}: {v}");
            }
        }
    }

    #[test]
    fn fsk_has_unit_envelope() {
        let spec = FrameSpec::default();
        let n = spec.symbols_needed();
        let x = synthesize_baseband(&tx(ModulationType::Fsk2, vec![0; n], 0.3), &spec).unwrap();
        assert!(x.iter().all(|v| (v.norm() - 1.0).abs() < 1e-9));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let syms: Vec<usize> = (0..n).map(|_| rng.random_range(0..8)).collect();
        let x = synthesize_baseband(&tx(ModulationType::Fsk8, syms, 0.3), &spec).unwrap();
        assert!(x.iter().all(|v| (v.norm() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn fsk_phase_is_continuous() {
        let spec = FrameSpec::default();
        let n = spec.symbols_needed();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let syms: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let x = synthesize_baseband(&tx(ModulationType::Fsk4, syms, 0.3), &spec).unwrap();
        let max_step = 2.0 * PI * 1.5 * FSK_TONE_SPACING;
        for w in x.windows(2) {
            assert!((w[1] * w[0].conj()).arg().abs() <= max_step + 1e-9);
        }
    }

    #[test]
    fn oqpsk_q_rail_is_delayed_half_symbol() {
        let spec = FrameSpec::default();
        let n = spec.symbols_needed();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let syms: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let q = shape_rails(&tx(ModulationType::Qpsk, syms.clone(), 0.35), &spec).unwrap();
        let o = shape_rails(&tx(ModulationType::Oqpsk, syms.clone(), 0.35), &spec).unwrap();
        for i in 0..q.len() {
            assert_eq!(o[i].re, q[i].re);
        }
        for i in 4..q.len() {
            assert!((o[i].im - q[i - 4].im).abs() < 1e-15);
        }
        // after normalization the relation holds up to one common scale
        let qn = synthesize_baseband(&tx(ModulationType::Qpsk, syms.clone(), 0.35), &spec).unwrap();
        let on = synthesize_baseband(&tx(ModulationType::Oqpsk, syms, 0.35), &spec).unwrap();
        let ratio = on[0].re / qn[0].re;
        for i in 4..q.len() {
            assert!((on[i].im - ratio * qn[i - 4].im).abs() < 1e-12);
        }
    }

    #[test]
    fn output_has_unit_power() {
        let spec = FrameSpec::default();
        let n = spec.symbols_needed();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in ModulationType::ALL {
            let syms: Vec<usize> = (0..n).map(|_| rng.random_range(0..m.order())).collect();
            let x = synthesize_baseband(&tx(m, syms, 0.5), &spec).unwrap();
            assert!((mean_power(&x) - 1.0).abs() < 1e-12);
            assert_eq!(x.len(), spec.frame_length() + spec.samples_per_symbol);
        }
    }

    #[test]
    fn too_few_symbols() {
        let spec = FrameSpec::default();
        let err =
            synthesize_baseband(&tx(ModulationType::Bpsk, vec![0; 10], 0.3), &spec).unwrap_err();
        assert!(matches!(err, Error::FrameUnderrun { .. }));
    }
}
