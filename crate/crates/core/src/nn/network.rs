use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Buffer, Layer, LayerSpec, Param};
use super::loss::softmax_xent;
use super::scalar::Real;
use super::tensor::Tensor3;
use crate::error::{shape_err, Result};

/// One step of a network: a plain layer, or a residual unit whose output is
/// `main(x) + shortcut(x)` (identity when `shortcut` is empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSpec {
    Layer(LayerSpec),
    Residual {
        main: Vec<LayerSpec>,
        shortcut: Vec<LayerSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_channels: usize,
    pub input_length: usize,
    pub nodes: Vec<NodeSpec>,
}

fn chain_shape(layers: &[LayerSpec], mut shape: (usize, usize)) -> Result<(usize, usize)> {
    for l in layers {
        shape = l.output_shape(shape)?;
    }
    Ok(shape)
}

impl Architecture {
    /// `(channels, length)` after every node, validating the whole stack.
    pub fn shape_trace(&self) -> Result<Vec<(usize, usize)>> {
        let mut shape = (self.input_channels, self.input_length);
        let mut trace = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            shape = match node {
                NodeSpec::Layer(l) => {
                    if matches!(l, LayerSpec::Softmax) && i + 1 != self.nodes.len() {
                        return Err(shape_err("softmax must be the final layer"));
                    }
                    l.output_shape(shape)?
                }
                NodeSpec::Residual { main, shortcut } => {
                    let a = chain_shape(main, shape)?;
                    let b = chain_shape(shortcut, shape)?;
                    if a != b {
                        return Err(shape_err(format!(
                            "residual branches disagree: {a:?} vs {b:?}"
                        )));
                    }
                    a
                }
            };
            trace.push(shape);
        }
        Ok(trace)
    }

    pub fn output_shape(&self) -> Result<(usize, usize)> {
        Ok(self
            .shape_trace()?
            .last()
            .copied()
            .unwrap_or((self.input_channels, self.input_length)))
    }

    fn ends_in_softmax(&self) -> bool {
        matches!(self.nodes.last(), Some(NodeSpec::Layer(LayerSpec::Softmax)))
    }
}

#[derive(Debug, Clone)]
enum Node<F> {
    Layer(Layer<F>),
    Residual {
        main: Vec<Layer<F>>,
        shortcut: Vec<Layer<F>>,
    },
}

fn chain_forward<F: Real>(
    layers: &mut [Layer<F>],
    mut x: Tensor3<F>,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor3<F>> {
    for l in layers {
        x = l.forward(x, rng)?;
    }
    Ok(x)
}

fn chain_infer<F: Real>(layers: &[Layer<F>], x: &Tensor3<F>) -> Result<Tensor3<F>> {
    let mut x = x.clone();
    for l in layers {
        x = l.infer(&x)?;
    }
    Ok(x)
}

fn chain_backward<F: Real>(layers: &mut [Layer<F>], mut g: Tensor3<F>) -> Result<Tensor3<F>> {
    for l in layers.iter_mut().rev() {
        g = l.backward(g)?;
    }
    Ok(g)
}

fn add_into<F: Real>(acc: &mut Tensor3<F>, other: &Tensor3<F>) {
    for (a, b) in acc.data_mut().iter_mut().zip(other.data()) {
        *a += *b;
    }
}

impl<F: Real> Node<F> {
    fn layers(&self) -> Box<dyn Iterator<Item = &Layer<F>> + '_> {
        match self {
            Node::Layer(l) => Box::new(std::iter::once(l)),
            Node::Residual { main, shortcut } => Box::new(main.iter().chain(shortcut)),
        }
    }

    fn layers_mut(&mut self) -> Box<dyn Iterator<Item = &mut Layer<F>> + '_> {
        match self {
            Node::Layer(l) => Box::new(std::iter::once(l)),
            Node::Residual { main, shortcut } => {
                Box::new(main.iter_mut().chain(shortcut.iter_mut()))
            }
        }
    }

    fn forward(&mut self, x: Tensor3<F>, rng: &mut ChaCha8Rng) -> Result<Tensor3<F>> {
        match self {
            Node::Layer(l) => l.forward(x, rng),
            Node::Residual { main, shortcut } => {
                let skip = chain_forward(shortcut, x.clone(), rng)?;
                let mut y = chain_forward(main, x, rng)?;
                add_into(&mut y, &skip);
                Ok(y)
            }
        }
    }

    fn infer(&self, x: &Tensor3<F>) -> Result<Tensor3<F>> {
        match self {
            Node::Layer(l) => l.infer(x),
            Node::Residual { main, shortcut } => {
                let skip = chain_infer(shortcut, x)?;
                let mut y = chain_infer(main, x)?;
                add_into(&mut y, &skip);
                Ok(y)
            }
        }
    }

    fn backward(&mut self, g: Tensor3<F>) -> Result<Tensor3<F>> {
        match self {
            Node::Layer(l) => l.backward(g),
            Node::Residual { main, shortcut } => {
                let mut dx = chain_backward(main, g.clone())?;
                let dskip = chain_backward(shortcut, g)?;
                add_into(&mut dx, &dskip);
                Ok(dx)
            }
        }
    }
}

/// A network instance: architecture plus parameters and running statistics.
#[derive(Debug, Clone)]
pub struct Network<F> {
    arch: Architecture,
    nodes: Vec<Node<F>>,
}

impl<F: Real> Network<F> {
    /// Builds the network with parameters drawn from a ChaCha8 stream seeded
    /// by `seed`, in node order.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.shape_trace()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = arch
            .nodes
            .iter()
            .enumerate()
            .map(|(i, spec)| match spec {
                NodeSpec::Layer(l) => {
                    Node::Layer(Layer::new(l.clone(), &format!("n{i}"), &mut rng))
                }
                NodeSpec::Residual { main, shortcut } => Node::Residual {
                    main: main
                        .iter()
                        .enumerate()
                        .map(|(j, l)| Layer::new(l.clone(), &format!("n{i}.main{j}"), &mut rng))
                        .collect(),
                    shortcut: shortcut
                        .iter()
                        .enumerate()
                        .map(|(j, l)| Layer::new(l.clone(), &format!("n{i}.skip{j}"), &mut rng))
                        .collect(),
                },
            })
            .collect();
        Ok(Self { arch, nodes })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    fn check_input(&self, x: &Tensor3<F>) -> Result<()> {
        if x.channels() != self.arch.input_channels || x.length() != self.arch.input_length {
            return Err(shape_err(format!(
                "network expects ({}, {}) inputs, got ({}, {})",
                self.arch.input_channels,
                self.arch.input_length,
                x.channels(),
                x.length()
            )));
        }
        Ok(())
    }

    /// Number of nodes that produce logits (everything but a final softmax).
    fn logit_nodes(&self) -> usize {
        self.nodes.len() - usize::from(self.arch.ends_in_softmax())
    }

    /// Train-mode forward up to the logits, caching for [`Network::backward`].
    pub fn forward_train(&mut self, x: Tensor3<F>, rng: &mut ChaCha8Rng) -> Result<Tensor3<F>> {
        self.check_input(&x)?;
        let n = self.logit_nodes();
        let mut x = x;
        for node in &mut self.nodes[..n] {
            x = node.forward(x, rng)?;
        }
        Ok(x)
    }

    /// Reverse pass from the gradient of the logits.
    pub fn backward(&mut self, dlogits: Tensor3<F>) -> Result<Tensor3<F>> {
        let n = self.logit_nodes();
        let mut g = dlogits;
        for node in self.nodes[..n].iter_mut().rev() {
            g = node.backward(g)?;
        }
        Ok(g)
    }

    /// Zeroes gradients, runs forward and backward on one batch, and
    /// returns the mean cross-entropy and the train-mode probabilities.
    pub fn loss_and_grad(
        &mut self,
        x: Tensor3<F>,
        labels: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<(F, Tensor3<F>)> {
        self.zero_grads();
        let logits = self.forward_train(x, rng)?;
        let out = softmax_xent(&logits, labels)?;
        self.backward(out.dlogits)?;
        Ok((out.loss, out.probs))
    }

    /// Eval-mode output of the whole network (probabilities when it ends in
    /// a softmax).
    pub fn infer(&self, x: &Tensor3<F>) -> Result<Tensor3<F>> {
        self.activation(x, self.nodes.len() - 1)
    }

    /// Eval-mode activation after node `node` (inclusive).
    pub fn activation(&self, x: &Tensor3<F>, node: usize) -> Result<Tensor3<F>> {
        self.check_input(x)?;
        if node >= self.nodes.len() {
            return Err(shape_err(format!("node {node} out of range")));
        }
        let mut y = self.nodes[0].infer(x)?;
        for n in &self.nodes[1..=node] {
            y = n.infer(&y)?;
        }
        Ok(y)
    }

    /// Eval-mode forward of nodes `from..` on an intermediate activation.
    pub fn infer_from(&self, x: &Tensor3<F>, from: usize) -> Result<Tensor3<F>> {
        let mut y = x.clone();
        for n in &self.nodes[from..] {
            y = n.infer(&y)?;
        }
        Ok(y)
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.grad.iter_mut().for_each(|g| *g = F::zero());
        }
        for l in self.nodes.iter_mut().flat_map(|n| n.layers_mut()) {
            l.clear_cache();
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &Param<F>> {
        self.nodes
            .iter()
            .flat_map(|n| n.layers())
            .flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<F>> {
        self.nodes
            .iter_mut()
            .flat_map(|n| n.layers_mut())
            .flat_map(|l| l.params.iter_mut())
    }

    pub fn buffers(&self) -> impl Iterator<Item = &Buffer<F>> {
        self.nodes
            .iter()
            .flat_map(|n| n.layers())
            .flat_map(|l| l.buffers.iter())
    }

    pub fn buffers_mut(&mut self) -> impl Iterator<Item = &mut Buffer<F>> {
        self.nodes
            .iter_mut()
            .flat_map(|n| n.layers_mut())
            .flat_map(|l| l.buffers.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|p| p.value.len()).sum()
    }

    /// Copies parameters and buffers into another precision.
    pub fn cast<G: Real>(&self) -> Network<G> {
        let mut out =
            Network::<G>::new(self.arch.clone(), 0).expect("architecture already validated");
        for (dst, src) in out.params_mut().zip(self.params()) {
            dst.value = src
                .value
                .iter()
                .map(|v| G::from_f64_lossy(v.to_f64().unwrap()))
                .collect();
        }
        for (dst, src) in out.buffers_mut().zip(self.buffers()) {
            dst.value = src
                .value
                .iter()
                .map(|v| G::from_f64_lossy(v.to_f64().unwrap()))
                .collect();
        }
        out
    }
}
