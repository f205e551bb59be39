use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::optim::{lr_at_epoch, sgd_momentum_step, Hyperparameters};
use super::scalar::Real;
use super::tensor::Tensor3;
use crate::error::{shape_err, Result};
use crate::sigsynth::{derive_rng, derive_seed};

/// Random-access labeled examples of a fixed `(channels, length)` shape.
pub trait TrainSet: Sync {
    fn len(&self) -> usize;
    fn input_shape(&self) -> (usize, usize);
    fn label(&self, index: usize) -> usize;
    /// Writes example `index` into `out` (`channels · length` values).
    fn write_input(&self, index: usize, out: &mut [f32]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Examples held in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySet {
    pub channels: usize,
    pub length: usize,
    pub inputs: Vec<f32>,
    pub labels: Vec<usize>,
}

impl ArraySet {
    pub fn new(
        channels: usize,
        length: usize,
        inputs: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if inputs.len() != channels * length * labels.len() {
            return Err(shape_err(format!(
                "{} values for {} examples of ({channels}, {length})",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self {
            channels,
            length,
            inputs,
            labels,
        })
    }
}

impl TrainSet for ArraySet {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn input_shape(&self) -> (usize, usize) {
        (self.channels, self.length)
    }

    fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    fn write_input(&self, index: usize, out: &mut [f32]) {
        let n = self.channels * self.length;
        out.copy_from_slice(&self.inputs[index * n..(index + 1) * n]);
    }
}

/// Assembles the examples at `indices` into one batch tensor.
pub fn gather<F: Real, S: TrainSet + ?Sized>(set: &S, indices: &[usize]) -> Tensor3<F> {
    let (c, t) = set.input_shape();
    let mut buf = vec![0f32; c * t];
    let mut data = Vec::with_capacity(indices.len() * c * t);
    for &i in indices {
        set.write_input(i, &mut buf);
        data.extend(buf.iter().map(|&v| F::from_f32(v).unwrap()));
    }
    Tensor3::from_vec(indices.len(), c, t, data).expect("gathered batch shape")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub hyper: Hyperparameters,
    pub epochs: Vec<EpochRecord>,
}

/// Minibatch SGD with momentum over `epochs` passes. Each epoch visits the
/// set in an order drawn from `(seed, epoch)`; dropout masks come from a
/// separate per-epoch stream, so runs are reproducible bit for bit.
pub fn fit<F: Real, S: TrainSet + ?Sized>(
    net: &mut Network<F>,
    set: &S,
    hyper: &Hyperparameters,
) -> Result<TrainHistory> {
    hyper.validate()?;
    if set.is_empty() {
        return Err(crate::Error::InsufficientData("empty training set".into()));
    }
    let arch = net.architecture();
    if set.input_shape() != (arch.input_channels, arch.input_length) {
        return Err(shape_err(format!(
            "training examples are {:?}, network expects ({}, {})",
            set.input_shape(),
            arch.input_channels,
            arch.input_length
        )));
    }
    let order_seed = derive_seed(hyper.seed, "shuffle");
    let dropout_seed = derive_seed(hyper.seed, "dropout");
    let mut history = TrainHistory {
        hyper: *hyper,
        epochs: Vec::with_capacity(hyper.epochs),
    };
    let mut order: Vec<usize> = (0..set.len()).collect();
    for epoch in 0..hyper.epochs {
        let started = Instant::now();
        let lr = lr_at_epoch(epoch, hyper);
        order.sort_unstable();
        order.shuffle(&mut derive_rng(order_seed, epoch as u64));
        let mut dropout_rng = derive_rng(dropout_seed, epoch as u64);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for chunk in order.chunks(hyper.batch_size) {
            let x = gather::<F, _>(set, chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| set.label(i)).collect();
            let (loss, probs) = net.loss_and_grad(x, &labels, &mut dropout_rng)?;
            for p in net.params_mut() {
                sgd_momentum_step(p, lr, hyper.momentum);
            }
            loss_sum += loss.to_f64().unwrap() * chunk.len() as f64;
            correct += probs
                .argmax_rows()
                .iter()
                .zip(&labels)
                .filter(|(a, b)| a == b)
                .count();
        }
        let rec = EpochRecord {
            epoch,
            lr,
            loss: loss_sum / set.len() as f64,
            accuracy: correct as f64 / set.len() as f64,
        };
        info!(
            "epoch {:>3}  lr {:.5}  loss {:.4}  acc {:.4}  ({:.1}s)",
            epoch,
            lr,
            rec.loss,
            rec.accuracy,
            started.elapsed().as_secs_f64()
        );
        history.epochs.push(rec);
    }
    Ok(history)
}

/// Eval-mode class probabilities for a batch (`(B, classes)` rows).
pub fn predict<F: Real>(net: &Network<F>, batch: &Tensor3<F>) -> Result<Tensor3<F>> {
    net.infer(batch)
}

/// Eval-mode probabilities for every example of a set, evaluated in
/// chunks of `batch_size`; rows are flattened in set order.
pub fn predict_set<F: Real, S: TrainSet + ?Sized>(
    net: &Network<F>,
    set: &S,
    batch_size: usize,
) -> Result<Vec<f32>> {
    let all: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::new();
    for chunk in all.chunks(batch_size.max(1)) {
        let probs = net.infer(&gather::<F, _>(set, chunk))?;
        out.extend(probs.data().iter().map(|v| v.to_f32().unwrap()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::LayerSpec;
    use crate::nn::network::{Architecture, NodeSpec};

    fn tiny_arch() -> Architecture {
        Architecture {
            input_channels: 2,
            input_length: 16,
            nodes: vec![
                NodeSpec::Layer(LayerSpec::Conv1d {
                    in_channels: 2,
                    out_channels: 8,
                    kernel: 3,
                    stride: 1,
                }),
                NodeSpec::Layer(LayerSpec::BatchNorm1d {
                    channels: 8,
                    zero_init: false,
                }),
                NodeSpec::Layer(LayerSpec::Relu),
                NodeSpec::Layer(LayerSpec::GlobalAvgPool),
                NodeSpec::Layer(LayerSpec::Dense {
                    in_features: 8,
                    out_features: 12,
                }),
                NodeSpec::Layer(LayerSpec::Softmax),
            ],
        }
    }

    fn toy_set(n: usize) -> ArraySet {
        let mut rng = derive_rng(1, 0);
        let labels: Vec<usize> = (0..n).map(|i| i % 12).collect();
        let inputs = labels
            .iter()
            .flat_map(|&l| {
                let mut v = vec![0f32; 32];
                for (t, x) in v.iter_mut().enumerate() {
                    let noise: f32 = rand::Rng::random_range(&mut rng, -0.1..0.1);
                    *x = ((l as f32 + 1.0) * 0.2 * t as f32).sin() + noise;
                }
                v
            })
            .collect();
        ArraySet::new(2, 16, inputs, labels).unwrap()
    }

    #[test]
    fn history_follows_schedule_and_is_reproducible() {
        let set = toy_set(48);
        let hyper = Hyperparameters {
            epochs: 12,
            halving_period: 5,
            batch_size: 16,
            seed: 4,
            ..Hyperparameters::default()
        };
        let mut a = Network::<f32>::new(tiny_arch(), 9).unwrap();
        let mut b = Network::<f32>::new(tiny_arch(), 9).unwrap();
        let ha = fit(&mut a, &set, &hyper).unwrap();
        let hb = fit(&mut b, &set, &hyper).unwrap();
        assert_eq!(ha.epochs.len(), 12);
        for r in &ha.epochs {
            assert_eq!(r.lr, lr_at_epoch(r.epoch, &hyper));
        }
        assert_eq!(ha, hb);
    }

    #[test]
    fn batch_and_single_predictions_agree() {
        let set = toy_set(10);
        let net = Network::<f32>::new(tiny_arch(), 2).unwrap();
        let batch = predict_set(&net, &set, 10).unwrap();
        let single = predict_set(&net, &set, 1).unwrap();
        for (a, b) in batch.iter().zip(&single) {
            assert!((a - b).abs() < 1e-6);
        }
        for row in batch.chunks(12) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_shape_mismatch_and_empty_sets() {
        let mut net = Network::<f32>::new(tiny_arch(), 2).unwrap();
        let wrong = ArraySet::new(1, 32, vec![0.0; 64], vec![0, 1]).unwrap();
        assert!(matches!(
            fit(&mut net, &wrong, &Hyperparameters::default()),
            Err(crate::Error::Shape(_))
        ));
        let empty = ArraySet::new(2, 16, vec![], vec![]).unwrap();
        assert!(fit(&mut net, &empty, &Hyperparameters::default()).is_err());
    }
}
