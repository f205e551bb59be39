use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigsynth::dataset::snr_grid;
use crate::sigsynth::sample::MAX_DELTA_SNR_DB;
use crate::zoo::Pooling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Every scheme against node count, equal-SNR nodes.
    Fig5,
    /// Feature fusion with unequal node SNRs.
    Fig6a,
    /// CNN features against PCA features.
    Fig6b,
    Custom,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Fig5 => "fig5",
            Suite::Fig6a => "fig6a",
            Suite::Fig6b => "fig6b",
            Suite::Custom => "custom",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Suite::Fig5, Suite::Fig6a, Suite::Fig6b, Suite::Custom]
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 1500 samples per cell, 2 dB grid, 40 epochs.
    Paper,
    /// 300 samples per cell, 4 dB grid, 15 epochs.
    Desk,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            _ => Err(Error::InvalidConfig(format!("unknown profile {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub profile: Profile,
    /// Node counts swept by fig5 (1 is the non-cooperative baseline).
    pub node_counts: Vec<usize>,
    pub snr_grid_db: Vec<f64>,
    pub samples_per_cell: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Node SNR half-spreads studied by fig6a.
    pub delta_snr_db: Vec<f64>,
    /// Node SNR half-spread of the CNN2/CNN3 training data.
    #[serde(default = "default_train_delta")]
    pub train_delta_snr_db: f64,
    /// Node count used by fig6a and fig6b.
    pub study_nodes: usize,
    pub cnn3_pooling: Pooling,
    pub seed: u64,
}

fn default_train_delta() -> f64 {
    MAX_DELTA_SNR_DB
}

impl ExperimentConfig {
    pub fn new(suite: Suite, profile: Profile) -> Self {
        let (samples_per_cell, step, epochs) = match profile {
            Profile::Paper => (1500, 2.0, 40),
            Profile::Desk => (300, 4.0, 15),
        };
        Self {
            suite,
            profile,
            node_counts: vec![1, 2, 4],
            snr_grid_db: snr_grid(-20.0, 20.0, step),
            samples_per_cell,
            epochs,
            batch_size: 128,
            delta_snr_db: vec![0.0, 5.0, 10.0],
            train_delta_snr_db: default_train_delta(),
            study_nodes: 4,
            cnn3_pooling: Pooling::Flatten,
            seed: 2020,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.node_counts.is_empty() || self.node_counts.contains(&0) {
            return bad(format!("node counts {:?}", self.node_counts));
        }
        if self.study_nodes == 0 {
            return bad("study node count must be positive".into());
        }
        if self.snr_grid_db.windows(2).any(|w| w[1] <= w[0]) || self.snr_grid_db.is_empty() {
            return bad("SNR grid must be nonempty and strictly increasing".into());
        }
        if self.samples_per_cell < 3 || self.epochs == 0 || self.batch_size == 0 {
            return bad("samples per cell, epochs and batch size must be positive".into());
        }
        if self
            .delta_snr_db
            .iter()
            .chain([&self.train_delta_snr_db])
            .any(|d| !(0.0..=MAX_DELTA_SNR_DB).contains(d))
        {
            return bad(format!("delta SNR values {:?}", self.delta_snr_db));
        }
        Ok(())
    }

    /// Fingerprint of everything that affects results.
    pub fn fingerprint(&self) -> String {
        crate::util::fingerprint(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_pin_scale() {
        let p = ExperimentConfig::new(Suite::Fig5, Profile::Paper);
        assert_eq!(
            (p.samples_per_cell, p.epochs, p.snr_grid_db.len()),
            (1500, 40, 21)
        );
        let d = ExperimentConfig::new(Suite::Fig5, Profile::Desk);
        assert_eq!(
            (d.samples_per_cell, d.epochs, d.snr_grid_db.len()),
            (300, 15, 11)
        );
        assert_eq!(d.delta_snr_db, [0.0, 5.0, 10.0]);
        d.validate().unwrap();
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let c = ExperimentConfig::new(Suite::Fig6a, Profile::Desk);
        let back: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let mut bad = c.clone();
        bad.delta_snr_db.push(12.0);
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.node_counts = vec![0];
        assert!(bad.validate().is_err());
    }
}
