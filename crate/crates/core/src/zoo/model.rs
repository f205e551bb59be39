use crate::error::{shape_err, Error, Result};
use crate::nn::{Network, Tensor3};
use crate::sigsynth::{push_agc, IqFrame};

use super::spec::{Compiled, ModelKind, NetworkSpec, FEATURE_DIM};

/// A network instance together with the block-level spec it was built from.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: NetworkSpec,
    pub net: Network<f32>,
    feature_node: Option<usize>,
    /// Fingerprint of the training configuration, if trained.
    pub fingerprint: Option<String>,
}

impl Model {
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let Compiled {
            architecture,
            feature_node,
            ..
        } = spec.compile()?;
        Ok(Self {
            net: Network::new(architecture, seed)?,
            spec,
            feature_node,
            fingerprint: None,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn feature_node(&self) -> Option<usize> {
        self.feature_node
    }

    /// Eval-mode class probabilities, `(B, 12, 1)`.
    pub fn predict(&self, x: &Tensor3<f32>) -> Result<Tensor3<f32>> {
        self.net.infer(x)
    }

    /// Eval-mode feature vectors `(B, 32, 1)` for a batch of IQ frames.
    pub fn features(&self, x: &Tensor3<f32>) -> Result<Tensor3<f32>> {
        let node = self.feature_node.ok_or(Error::NoFeatureLayer)?;
        self.net.activation(x, node)
    }

    /// Features and probabilities from one forward pass.
    pub fn features_and_probs(&self, x: &Tensor3<f32>) -> Result<(Tensor3<f32>, Tensor3<f32>)> {
        let node = self.feature_node.ok_or(Error::NoFeatureLayer)?;
        let feats = self.net.activation(x, node)?;
        let probs = self.net.infer_from(&feats, node + 1)?;
        Ok((feats, probs))
    }
}

/// A single AGC-scaled frame as a `(1, 2, L)` tensor with I on channel 0,
/// Q on 1.
pub fn frame_tensor(frame: &IqFrame) -> Result<Tensor3<f32>> {
    if frame.i.len() != frame.q.len() {
        return Err(shape_err(format!(
            "I has {} samples, Q has {}",
            frame.i.len(),
            frame.q.len()
        )));
    }
    let mut data = Vec::with_capacity(2 * frame.i.len());
    push_agc(&frame.i, &frame.q, &mut data);
    Tensor3::from_vec(1, 2, frame.i.len(), data)
}

/// Post-ReLU activations of CNN1's feature layer for one frame.
pub fn extract_features(model: &Model, frame: &IqFrame) -> Result<Vec<f32>> {
    let f = model.features(&frame_tensor(frame)?)?;
    debug_assert_eq!(f.data().len(), FEATURE_DIM);
    Ok(f.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NodeSpec;
    use crate::zoo::spec::{build_cnn1, build_cnn2, build_cnn3, BlockSpec, Pooling};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(seed: u64) -> IqFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        IqFrame {
            i: (0..512).map(|_| rng.random_range(-1.0..1.0)).collect(),
            q: (0..512).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn zero_frame_gives_a_distribution() {
        let m = Model::new(build_cnn1(), 3).unwrap();
        let p = m.predict(&Tensor3::zeros(1, 2, 512)).unwrap();
        assert_eq!(p.shape(), [1, 12, 1]);
        assert!((p.data().iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn features_are_nonnegative_and_deterministic() {
        let m = Model::new(build_cnn1(), 3).unwrap();
        let f = random_frame(1);
        let a = extract_features(&m, &f).unwrap();
        assert_eq!(a.len(), FEATURE_DIM);
        assert!(a.iter().all(|&v| v >= 0.0));
        assert_eq!(a, extract_features(&m, &f).unwrap());
    }

    #[test]
    fn features_then_head_equals_full_forward() {
        let m = Model::new(build_cnn1(), 5).unwrap();
        let x = frame_tensor(&random_frame(2)).unwrap();
        let (_, p) = m.features_and_probs(&x).unwrap();
        assert_eq!(p, m.predict(&x).unwrap());
    }

    #[test]
    fn only_cnn1_has_features() {
        let f = random_frame(0);
        let cnn2 = Model::new(build_cnn2(1).unwrap(), 0).unwrap();
        assert!(matches!(
            extract_features(&cnn2, &f),
            Err(Error::NoFeatureLayer)
        ));
        let cnn3 = Model::new(build_cnn3(2).unwrap(), 0).unwrap();
        assert!(matches!(
            cnn3.features(&Tensor3::zeros(1, 2, 32)),
            Err(Error::NoFeatureLayer)
        ));
    }

    #[test]
    fn cnn3_rejects_wrong_feature_length() {
        let m = Model::new(build_cnn3(3).unwrap(), 0).unwrap();
        let p = m.predict(&Tensor3::zeros(2, 3, FEATURE_DIM)).unwrap();
        assert_eq!(p.shape(), [2, 12, 1]);
        assert!(matches!(
            m.predict(&Tensor3::zeros(1, 3, 31)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn fresh_resblock1_is_relu_of_its_input() {
        let spec = NetworkSpec {
            blocks: vec![BlockSpec::ResBlock1 { channels: 4 }],
            input_channels: 4,
            input_length: 16,
            pooling: Pooling::Flatten,
            hidden: vec![],
            feature_layer: None,
            ..build_cnn1()
        };
        let m = Model::new(spec, 8).unwrap();
        assert!(matches!(
            m.net.architecture().nodes[0],
            NodeSpec::Residual { .. }
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor3::from_vec(
            2,
            4,
            16,
            (0..128).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let y = m.net.activation(&x, 1).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, b.max(0.0));
        }
    }

    #[test]
    fn resblock2_halves_length() {
        for c in [32, 64, 128] {
            let spec = NetworkSpec {
                blocks: vec![BlockSpec::ResBlock2 { channels: c }],
                input_channels: 16,
                input_length: 64,
                ..build_cnn1()
            };
            assert_eq!(spec.block_trace(), [(c, 32)]);
            let m = Model::new(spec, 0).unwrap();
            assert_eq!(
                m.net
                    .activation(&Tensor3::zeros(1, 16, 64), 1)
                    .unwrap()
                    .shape(),
                [1, c, 32]
            );
        }
    }
}
