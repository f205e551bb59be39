//! Block-level descriptions of the three classifiers and their compilation
//! into engine architectures.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::{Architecture, LayerSpec, NodeSpec};
use crate::sigsynth::NUM_CLASSES;

/// Width of CNN1's feature layer.
pub const FEATURE_DIM: usize = 32;
/// Frame length the IQ classifiers are built for.
pub const FRAME_LEN: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "block", rename_all = "snake_case")]
pub enum BlockSpec {
    /// Conv(k) + BN + ReLU + MaxPool2.
    ConBlock { kernel: usize, channels: usize },
    /// Two 3-tap convolutions around an identity skip.
    ResBlock1 { channels: usize },
    /// Strided residual block with a 1×1 projection on the skip.
    ResBlock2 { channels: usize },
    /// Conv(k) + BN + ReLU, no pooling.
    ConvBnRelu { kernel: usize, channels: usize },
}

impl BlockSpec {
    fn output_shape(&self, (c, t): (usize, usize)) -> (usize, usize) {
        match *self {
            BlockSpec::ConBlock { channels, .. } => (channels, t.div_ceil(2)),
            BlockSpec::ResBlock1 { .. } => (c, t),
            BlockSpec::ResBlock2 { channels } => (channels, t.div_ceil(2)),
            BlockSpec::ConvBnRelu { channels, .. } => (channels, t),
        }
    }

    fn compile(&self, in_channels: usize, out: &mut Vec<NodeSpec>) {
        let conv = |i, o, k, s| LayerSpec::Conv1d {
            in_channels: i,
            out_channels: o,
            kernel: k,
            stride: s,
        };
        let bn = |c, zero_init| LayerSpec::BatchNorm1d {
            channels: c,
            zero_init,
        };
        match *self {
            BlockSpec::ConBlock { kernel, channels } => out.extend(
                [
                    conv(in_channels, channels, kernel, 1),
                    bn(channels, false),
                    LayerSpec::Relu,
                    LayerSpec::MaxPool2,
                ]
                .map(NodeSpec::Layer),
            ),
            BlockSpec::ResBlock1 { channels } => {
                out.push(NodeSpec::Residual {
                    main: vec![
                        conv(in_channels, channels, 3, 1),
                        bn(channels, false),
                        LayerSpec::Relu,
                        conv(channels, channels, 3, 1),
                        bn(channels, true),
                    ],
                    shortcut: vec![],
                });
                out.push(NodeSpec::Layer(LayerSpec::Relu));
            }
            BlockSpec::ResBlock2 { channels } => {
                out.push(NodeSpec::Residual {
                    main: vec![
                        conv(in_channels, channels, 3, 2),
                        bn(channels, false),
                        LayerSpec::Relu,
                        conv(channels, channels, 3, 1),
                        bn(channels, true),
                    ],
                    shortcut: vec![conv(in_channels, channels, 1, 2), bn(channels, false)],
                });
                out.push(NodeSpec::Layer(LayerSpec::Relu));
            }
            BlockSpec::ConvBnRelu { kernel, channels } => out.extend(
                [
                    conv(in_channels, channels, kernel, 1),
                    bn(channels, false),
                    LayerSpec::Relu,
                ]
                .map(NodeSpec::Layer),
            ),
        }
    }
}

/// How the convolutional trunk is reduced before the dense head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    GlobalAvg,
    /// Feed every `(channel, position)` value to the first dense layer.
    Flatten,
}

/// A hidden fully connected layer, always followed by ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseSpec {
    pub units: usize,
    #[serde(default)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelKind {
    Cnn1,
    Cnn2 { n_nodes: usize },
    Cnn3 { n_nodes: usize },
}

impl ModelKind {
    pub fn n_nodes(&self) -> usize {
        match *self {
            ModelKind::Cnn1 => 1,
            ModelKind::Cnn2 { n_nodes } | ModelKind::Cnn3 { n_nodes } => n_nodes,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelKind::Cnn1 => "CNN1".into(),
            ModelKind::Cnn2 { n_nodes } => format!("CNN2({n_nodes})"),
            ModelKind::Cnn3 { n_nodes } => format!("CNN3({n_nodes})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: ModelKind,
    pub input_channels: usize,
    pub input_length: usize,
    pub blocks: Vec<BlockSpec>,
    pub pooling: Pooling,
    pub hidden: Vec<DenseSpec>,
    /// Index into `hidden` whose post-ReLU output is the feature vector.
    pub feature_layer: Option<usize>,
    pub classes: usize,
}

/// A compiled spec: the engine architecture plus where the feature layer
/// landed in its node list.
#[derive(Debug, Clone, PartialEq)]
pub struct Compiled {
    pub architecture: Architecture,
    /// Node index of the ReLU that ends each block.
    pub block_ends: Vec<usize>,
    pub feature_node: Option<usize>,
}

impl NetworkSpec {
    /// `(channels, length)` after each block.
    pub fn block_trace(&self) -> Vec<(usize, usize)> {
        let mut shape = (self.input_channels, self.input_length);
        self.blocks
            .iter()
            .map(|b| {
                shape = b.output_shape(shape);
                shape
            })
            .collect()
    }

    pub fn compile(&self) -> Result<Compiled> {
        if self.classes == 0 || self.input_channels == 0 || self.input_length == 0 {
            return Err(shape_err(format!(
                "degenerate network spec {:?}",
                self.kind
            )));
        }
        if matches!(self.feature_layer, Some(i) if i >= self.hidden.len()) {
            return Err(shape_err("feature layer index past the hidden layers"));
        }
        let mut nodes = Vec::new();
        let mut block_ends = Vec::with_capacity(self.blocks.len());
        let mut channels = self.input_channels;
        for (b, &(c, _)) in self.blocks.iter().zip(&self.block_trace()) {
            b.compile(channels, &mut nodes);
            block_ends.push(nodes.len() - 1);
            channels = c;
        }
        let (c, t) = self
            .block_trace()
            .last()
            .copied()
            .unwrap_or((self.input_channels, self.input_length));
        let mut width = match self.pooling {
            Pooling::GlobalAvg => {
                nodes.push(NodeSpec::Layer(LayerSpec::GlobalAvgPool));
                c
            }
            Pooling::Flatten => c * t,
        };
        let mut feature_node = None;
        for (i, d) in self.hidden.iter().enumerate() {
            nodes.push(NodeSpec::Layer(LayerSpec::Dense {
                in_features: width,
                out_features: d.units,
            }));
            nodes.push(NodeSpec::Layer(LayerSpec::Relu));
            if self.feature_layer == Some(i) {
                feature_node = Some(nodes.len() - 1);
            }
            if let Some(p) = d.dropout {
                nodes.push(NodeSpec::Layer(LayerSpec::Dropout { p }));
            }
            width = d.units;
        }
        nodes.push(NodeSpec::Layer(LayerSpec::Dense {
            in_features: width,
            out_features: self.classes,
        }));
        nodes.push(NodeSpec::Layer(LayerSpec::Softmax));
        let architecture = Architecture {
            input_channels: self.input_channels,
            input_length: self.input_length,
            nodes,
        };
        architecture.shape_trace()?;
        Ok(Compiled {
            architecture,
            block_ends,
            feature_node,
        })
    }
}

fn iq_trunk() -> Vec<BlockSpec> {
    vec![
        BlockSpec::ConBlock {
            kernel: 7,
            channels: 32,
        },
        BlockSpec::ResBlock1 { channels: 32 },
        BlockSpec::ResBlock2 { channels: 64 },
        BlockSpec::ResBlock1 { channels: 64 },
        BlockSpec::ResBlock2 { channels: 128 },
        BlockSpec::ResBlock1 { channels: 128 },
    ]
}

/// The single-node classifier on `(2, 512)` IQ frames with a 32-unit
/// feature layer.
pub fn build_cnn1() -> NetworkSpec {
    NetworkSpec {
        kind: ModelKind::Cnn1,
        input_channels: 2,
        input_length: FRAME_LEN,
        blocks: iq_trunk(),
        pooling: Pooling::GlobalAvg,
        hidden: vec![
            DenseSpec {
                units: 128,
                dropout: Some(0.5),
            },
            DenseSpec {
                units: FEATURE_DIM,
                dropout: None,
            },
        ],
        feature_layer: Some(1),
        classes: NUM_CLASSES,
    }
}

/// CNN1 with the first convolution widened to `2N` input channels and no
/// feature layer designation.
pub fn build_cnn2(n_nodes: usize) -> Result<NetworkSpec> {
    if n_nodes < 1 {
        return Err(Error::InvalidNodeCount(n_nodes));
    }
    Ok(NetworkSpec {
        kind: ModelKind::Cnn2 { n_nodes },
        input_channels: 2 * n_nodes,
        feature_layer: None,
        ..build_cnn1()
    })
}

/// The fusion classifier over `N` stacked 32-dimensional feature vectors.
pub fn build_cnn3(n_nodes: usize) -> Result<NetworkSpec> {
    build_cnn3_with(n_nodes, Pooling::GlobalAvg)
}

pub fn build_cnn3_with(n_nodes: usize, pooling: Pooling) -> Result<NetworkSpec> {
    if n_nodes < 1 {
        return Err(Error::InvalidNodeCount(n_nodes));
    }
    Ok(NetworkSpec {
        kind: ModelKind::Cnn3 { n_nodes },
        input_channels: n_nodes,
        input_length: FEATURE_DIM,
        blocks: vec![
            BlockSpec::ConvBnRelu {
                kernel: 3,
                channels: 64,
            },
            BlockSpec::ConvBnRelu {
                kernel: 3,
                channels: 64,
            },
        ],
        pooling,
        hidden: vec![],
        feature_layer: None,
        classes: NUM_CLASSES,
    })
}
