//! Finite-difference check of the reverse pass on a small residual network
//! in f64.
//!
//! cargo run --release --example gradient_check

use coopsig::nn::gradcheck::{check_input_gradients, check_param_gradients};
use coopsig::nn::{Architecture, LayerSpec, Network, NodeSpec, Tensor3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> coopsig::Result<()> {
    let arch = Architecture {
        input_channels: 2,
        input_length: 16,
        nodes: vec![
            NodeSpec::Layer(LayerSpec::Conv1d {
                in_channels: 2,
                out_channels: 4,
                kernel: 7,
                stride: 1,
            }),
            NodeSpec::Layer(LayerSpec::BatchNorm1d {
                channels: 4,
                zero_init: false,
            }),
            NodeSpec::Layer(LayerSpec::Relu),
            NodeSpec::Layer(LayerSpec::MaxPool2),
            NodeSpec::Residual {
                main: vec![
                    LayerSpec::Conv1d {
                        in_channels: 4,
                        out_channels: 6,
                        kernel: 3,
                        stride: 2,
                    },
                    LayerSpec::BatchNorm1d {
                        channels: 6,
                        zero_init: false,
                    },
                    LayerSpec::Relu,
                    LayerSpec::Conv1d {
                        in_channels: 6,
                        out_channels: 6,
                        kernel: 3,
                        stride: 1,
                    },
                    LayerSpec::BatchNorm1d {
                        channels: 6,
                        zero_init: false,
                    },
                ],
                shortcut: vec![
                    LayerSpec::Conv1d {
                        in_channels: 4,
                        out_channels: 6,
                        kernel: 1,
                        stride: 2,
                    },
                    LayerSpec::BatchNorm1d {
                        channels: 6,
                        zero_init: false,
                    },
                ],
            },
            NodeSpec::Layer(LayerSpec::Relu),
            NodeSpec::Layer(LayerSpec::GlobalAvgPool),
            NodeSpec::Layer(LayerSpec::Dense {
                in_features: 6,
                out_features: 12,
            }),
            NodeSpec::Layer(LayerSpec::Softmax),
        ],
    };
    let mut net = Network::<f64>::new(arch, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data = (0..4 * 2 * 16)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let x = Tensor3::from_vec(4, 2, 16, data)?;
    let labels = [0, 3, 7, 11];

    let params = check_param_gradients(&mut net, &x, &labels, 1e-3, Some(100), 3)?;
    println!(
        "{} parameter entries, max relative error {:.2e} at {}",
        params.checked, params.max_rel_error, params.worst
    );
    let input = check_input_gradients(&mut net, &x, &labels, 1e-3)?;
    println!(
        "{} input entries, max relative error {:.2e}",
        input.checked, input.max_rel_error
    );
    Ok(())
}
