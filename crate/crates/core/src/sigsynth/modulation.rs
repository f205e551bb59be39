//! Modulation alphabets and symbol mapping.
//!
//! Constellation conventions:
//!
//! | modulation | points | map |
//! |------------|--------|-----|
//! | BPSK | ±1 | 0 → +1, 1 → −1 |
//! | QPSK, OQPSK | (±1 ± j)/√2 | I bit = MSB, Q bit = LSB, bit 0 → +1 |
//! | 8PSK | e^{j2πk/8} | Gray: index g sits at position k with gray(k) = g |
//! | 16QAM, 64QAM | odd-level square grid | per-axis Gray, I bits high, Q bits low |
//! | 32QAM | 6×6 odd-level grid minus corners | row-major (Q descending, I ascending) |
//! | 4PAM, 8PAM | ±{1, 3, …} on the real axis | natural binary: level = 2i − (M − 1) |
//!
//! Every linear alphabet is scaled to unit average energy. FSK symbols map
//! to tone indices; the tone frequencies are chosen during waveform synthesis.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of modulation classes.
pub const NUM_CLASSES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModulationType {
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8PSK")]
    Psk8,
    #[serde(rename = "OQPSK")]
    Oqpsk,
    #[serde(rename = "2FSK")]
    Fsk2,
    #[serde(rename = "4FSK")]
    Fsk4,
    #[serde(rename = "8FSK")]
    Fsk8,
    #[serde(rename = "16QAM")]
    Qam16,
    #[serde(rename = "32QAM")]
    Qam32,
    #[serde(rename = "64QAM")]
    Qam64,
    #[serde(rename = "4PAM")]
    Pam4,
    #[serde(rename = "8PAM")]
    Pam8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Psk,
    Oqpsk,
    Fsk,
    Qam,
    Pam,
}

impl Family {
    /// Linear families are pulse shaped; FSK is continuous phase.
    pub fn is_linear(self) -> bool {
        !matches!(self, Family::Fsk)
    }
}

impl ModulationType {
    /// All classes in label order.
    pub const ALL: [ModulationType; NUM_CLASSES] = [
        ModulationType::Bpsk,
        ModulationType::Qpsk,
        ModulationType::Psk8,
        ModulationType::Oqpsk,
        ModulationType::Fsk2,
        ModulationType::Fsk4,
        ModulationType::Fsk8,
        ModulationType::Qam16,
        ModulationType::Qam32,
        ModulationType::Qam64,
        ModulationType::Pam4,
        ModulationType::Pam8,
    ];

    pub fn order(self) -> usize {
        use ModulationType::*;
        match self {
            Bpsk | Fsk2 => 2,
            Qpsk | Oqpsk | Fsk4 | Pam4 => 4,
            Psk8 | Fsk8 | Pam8 => 8,
            Qam16 => 16,
            Qam32 => 32,
            Qam64 => 64,
        }
    }

    pub fn family(self) -> Family {
        use ModulationType::*;
        match self {
            Bpsk | Qpsk | Psk8 => Family::Psk,
            Oqpsk => Family::Oqpsk,
            Fsk2 | Fsk4 | Fsk8 => Family::Fsk,
            Qam16 | Qam32 | Qam64 => Family::Qam,
            Pam4 | Pam8 => Family::Pam,
        }
    }

    /// Class label in `[0, 12)`.
    pub fn label(self) -> usize {
        Self::ALL.iter().position(|&m| m == self).unwrap()
    }

    pub fn from_label(label: usize) -> Result<Self> {
        Self::ALL
            .get(label)
            .copied()
            .ok_or(Error::InvalidLabel(label))
    }

    pub fn name(self) -> &'static str {
        use ModulationType::*;
        match self {
            Bpsk => "BPSK",
            Qpsk => "QPSK",
            Psk8 => "8PSK",
            Oqpsk => "OQPSK",
            Fsk2 => "2FSK",
            Fsk4 => "4FSK",
            Fsk8 => "8FSK",
            Qam16 => "16QAM",
            Qam32 => "32QAM",
            Qam64 => "64QAM",
            Pam4 => "4PAM",
            Pam8 => "8PAM",
        }
    }

    /// The full unit-energy alphabet, indexed by symbol. Empty for FSK.
    pub fn constellation(self) -> Vec<Complex64> {
        if !self.family().is_linear() {
            return Vec::new();
        }
        (0..self.order()).map(|i| self.point(i)).collect()
    }

    fn point(self, index: usize) -> Complex64 {
        use ModulationType::*;
        match self {
            Bpsk => Complex64::new(if index == 0 { 1.0 } else { -1.0 }, 0.0),
            Qpsk | Oqpsk => {
                let i = if index & 0b10 == 0 { 1.0 } else { -1.0 };
                let q = if index & 0b01 == 0 { 1.0 } else { -1.0 };
                Complex64::new(i, q) / 2f64.sqrt()
            }
            Psk8 => {
                let pos = inverse_gray(index);
                Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * pos as f64 / 8.0)
            }
            Qam16 => square_qam(index, 2) / 10f64.sqrt(),
            Qam64 => square_qam(index, 3) / 42f64.sqrt(),
            Qam32 => CROSS32[index] / 20f64.sqrt(),
            Pam4 => Complex64::new(pam_level(index, 4) / 5f64.sqrt(), 0.0),
            Pam8 => Complex64::new(pam_level(index, 8) / 21f64.sqrt(), 0.0),
            Fsk2 | Fsk4 | Fsk8 => unreachable!("FSK has no constellation"),
        }
    }
}

impl fmt::Display for ModulationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of [`map_symbols`].
#[derive(Debug, Clone, PartialEq)]
pub enum MappedSymbols {
    Points(Vec<Complex64>),
    Tones(Vec<usize>),
}

/// Maps symbol indices to constellation points (linear families) or tone
/// indices (FSK).
pub fn map_symbols(modulation: ModulationType, indices: &[usize]) -> Result<MappedSymbols> {
    let order = modulation.order();
    if let Some(&bad) = indices.iter().find(|&&i| i >= order) {
        return Err(Error::InvalidSymbol {
            modulation: modulation.name(),
            index: bad,
            order,
        });
    }
    if modulation.family().is_linear() {
        Ok(MappedSymbols::Points(
            indices.iter().map(|&i| modulation.point(i)).collect(),
        ))
    } else {
        Ok(MappedSymbols::Tones(indices.to_vec()))
    }
}

fn inverse_gray(mut g: usize) -> usize {
    let mut n = g;
    while g > 0 {
        g >>= 1;
        n ^= g;
    }
    n
}

/// Gray-coded odd level on an axis with `bits` bits: −(2^bits − 1) … +(2^bits − 1).
fn gray_level(code: usize, bits: u32) -> f64 {
    let levels = 1usize << bits;
    (2 * inverse_gray(code)) as f64 - (levels - 1) as f64
}

fn square_qam(index: usize, bits_per_axis: u32) -> Complex64 {
    let mask = (1 << bits_per_axis) - 1;
    let i_code = index >> bits_per_axis;
    let q_code = index & mask;
    Complex64::new(
        gray_level(i_code, bits_per_axis),
        gray_level(q_code, bits_per_axis),
    )
}

fn pam_level(index: usize, order: usize) -> f64 {
    (2 * index) as f64 - (order - 1) as f64
}

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// 32-point cross constellation, unnormalized (average energy 20).
const CROSS32: [Complex64; 32] = [
    c(-3.0, 5.0),
    c(-1.0, 5.0),
    c(1.0, 5.0),
    c(3.0, 5.0),
    c(-5.0, 3.0),
    c(-3.0, 3.0),
    c(-1.0, 3.0),
    c(1.0, 3.0),
    c(3.0, 3.0),
    c(5.0, 3.0),
    c(-5.0, 1.0),
    c(-3.0, 1.0),
    c(-1.0, 1.0),
    c(1.0, 1.0),
    c(3.0, 1.0),
    c(5.0, 1.0),
    c(-5.0, -1.0),
    c(-3.0, -1.0),
    c(-1.0, -1.0),
    c(1.0, -1.0),
    c(3.0, -1.0),
    c(5.0, -1.0),
    c(-5.0, -3.0),
    c(-3.0, -3.0),
    c(-1.0, -3.0),
    c(1.0, -3.0),
    c(3.0, -3.0),
    c(5.0, -3.0),
    c(-3.0, -5.0),
    c(-1.0, -5.0),
    c(1.0, -5.0),
    c(3.0, -5.0),
];
