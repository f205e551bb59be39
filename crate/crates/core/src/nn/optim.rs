use serde::{Deserialize, Serialize};

use super::layers::Param;
use super::scalar::Real;

/// Optimizer and schedule settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub initial_lr: f64,
    /// The learning rate halves every `halving_period` epochs.
    pub halving_period: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            initial_lr: 0.01,
            halving_period: 10,
            epochs: 40,
            momentum: 0.9,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.initial_lr > 0.0)
            || self.halving_period == 0
            || self.epochs == 0
            || !(0.0..1.0).contains(&self.momentum)
            || self.batch_size == 0
        {
            return Err(crate::Error::InvalidConfig(format!(
                "bad hyperparameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// Step schedule: `initial · 0.5^⌊epoch / halving_period⌋`.
pub fn lr_at_epoch(epoch: usize, hyper: &Hyperparameters) -> f64 {
    hyper.initial_lr * 0.5f64.powi((epoch / hyper.halving_period) as i32)
}

/// Classical momentum: `v ← μ·v + g`, `p ← p − lr·v`.
pub fn sgd_momentum_step<F: Real>(param: &mut Param<F>, lr: f64, momentum: f64) {
    let lr = F::from_f64_lossy(lr);
    let mu = F::from_f64_lossy(momentum);
    for ((p, v), &g) in param
        .value
        .iter_mut()
        .zip(param.velocity.iter_mut())
        .zip(&param.grad)
    {
        *v = mu * *v + g;
        *p -= lr * *v;
    }
}
