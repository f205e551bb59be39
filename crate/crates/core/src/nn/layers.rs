//! Layer kinds of the engine with forward and reverse passes.
//!
//! Train-mode forwards cache what their backward needs; [`Layer::infer`]
//! is a pure function of parameters and input.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scalar::{MatMut, MatRef, Real};
use super::tensor::Tensor3;
use crate::error::{shape_err, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Cross-correlation with `Same` padding: `kernel − 1` zeros in total,
    /// `⌊(kernel − 1)/2⌋` on the left; output length `⌈T/stride⌉`.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    BatchNorm1d {
        channels: usize,
        /// Start with γ = 0 instead of 1.
        #[serde(default)]
        zero_init: bool,
    },
    Relu,
    /// Non-overlapping windows of two; an odd tail forms its own window.
    MaxPool2,
    GlobalAvgPool,
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Dropout {
        p: f64,
    },
    Softmax,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::BatchNorm1d { .. } => "batchnorm1d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2 => "maxpool2",
            LayerSpec::GlobalAvgPool => "global_avg_pool",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Output `(channels, length)` for an input of `(channels, length)`.
    pub fn output_shape(&self, (c, t): (usize, usize)) -> Result<(usize, usize)> {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                if kernel == 0 || out_channels == 0 || !(1..=2).contains(&stride) {
                    return Err(shape_err(format!("invalid conv {self:?}")));
                }
                if c != in_channels {
                    return Err(shape_err(format!(
                        "conv expects {in_channels} channels, got {c}"
                    )));
                }
                Ok((out_channels, t.div_ceil(stride)))
            }
            LayerSpec::BatchNorm1d { channels, .. } => {
                if c != channels {
                    return Err(shape_err(format!(
                        "batch norm expects {channels} channels, got {c}"
                    )));
                }
                Ok((c, t))
            }
            LayerSpec::Relu | LayerSpec::Dropout { .. } => {
                if let LayerSpec::Dropout { p } = *self {
                    if !(0.0..1.0).contains(&p) {
                        return Err(shape_err(format!("dropout probability {p} outside [0, 1)")));
                    }
                }
                Ok((c, t))
            }
            LayerSpec::MaxPool2 => Ok((c, t.div_ceil(2))),
            LayerSpec::GlobalAvgPool => Ok((c, 1)),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                if c * t != in_features {
                    return Err(shape_err(format!(
                        "dense expects {in_features} features, got {}",
                        c * t
                    )));
                }
                Ok((out_features, 1))
            }
            LayerSpec::Softmax => {
                if t != 1 {
                    return Err(shape_err("softmax expects (classes, 1) rows"));
                }
                Ok((c, t))
            }
        }
    }
}

/// A trainable tensor with its gradient and momentum buffer.
#[derive(Debug, Clone)]
pub struct Param<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<F>,
    pub grad: Vec<F>,
    pub velocity: Vec<F>,
}

impl<F: Real> Param<F> {
    fn new(name: String, shape: Vec<usize>, value: Vec<F>) -> Self {
        let n = value.len();
        Self {
            name,
            shape,
            value,
            grad: vec![F::zero(); n],
            velocity: vec![F::zero(); n],
        }
    }
}

/// A non-trainable tensor (batch-norm running statistics).
#[derive(Debug, Clone)]
pub struct Buffer<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<F>,
}

#[derive(Debug, Clone, Default)]
enum Cache<F> {
    #[default]
    Empty,
    Conv {
        col: Vec<F>,
        in_shape: [usize; 3],
    },
    BatchNorm {
        xhat: Vec<F>,
        inv_std: Vec<F>,
        shape: [usize; 3],
    },
    Relu {
        mask: Vec<bool>,
        shape: [usize; 3],
    },
    MaxPool {
        argmax: Vec<u32>,
        in_shape: [usize; 3],
    },
    Shape([usize; 3]),
    Dense {
        input: Vec<F>,
        in_shape: [usize; 3],
    },
    Dropout {
        mask: Vec<F>,
        shape: [usize; 3],
    },
}

#[derive(Debug, Clone)]
pub struct Layer<F> {
    pub spec: LayerSpec,
    pub params: Vec<Param<F>>,
    pub buffers: Vec<Buffer<F>>,
    cache: Cache<F>,
}

fn he_normal<F: Real>(n: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Vec<F> {
    let std = (2.0 / fan_in as f64).sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            F::from_f64_lossy(std * z)
        })
        .collect()
}

impl<F: Real> Layer<F> {
    /// Allocates and initializes the layer's parameters: He-normal weights,
    /// zero biases, γ = 1 (or 0), β = 0, running statistics (0, 1).
    pub fn new(spec: LayerSpec, prefix: &str, rng: &mut ChaCha8Rng) -> Self {
        let name = |s: &str| format!("{prefix}.{s}");
        let (params, buffers) = match spec {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let fan_in = in_channels * kernel;
                (
                    vec![
                        Param::new(
                            name("weight"),
                            vec![out_channels, in_channels, kernel],
                            he_normal(out_channels * fan_in, fan_in, rng),
                        ),
                        Param::new(
                            name("bias"),
                            vec![out_channels],
                            vec![F::zero(); out_channels],
                        ),
                    ],
                    vec![],
                )
            }
            LayerSpec::BatchNorm1d {
                channels,
                zero_init,
            } => {
                let gamma = if zero_init { F::zero() } else { F::one() };
                (
                    vec![
                        Param::new(name("gamma"), vec![channels], vec![gamma; channels]),
                        Param::new(name("beta"), vec![channels], vec![F::zero(); channels]),
                    ],
                    vec![
                        Buffer {
                            name: name("running_mean"),
                            shape: vec![channels],
                            value: vec![F::zero(); channels],
                        },
                        Buffer {
                            name: name("running_var"),
                            shape: vec![channels],
                            value: vec![F::one(); channels],
                        },
                    ],
                )
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => (
                vec![
                    Param::new(
                        name("weight"),
                        vec![out_features, in_features],
                        he_normal(out_features * in_features, in_features, rng),
                    ),
                    Param::new(
                        name("bias"),
                        vec![out_features],
                        vec![F::zero(); out_features],
                    ),
                ],
                vec![],
            ),
            _ => (vec![], vec![]),
        };
        Self {
            spec,
            params,
            buffers,
            cache: Cache::Empty,
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache = Cache::Empty;
    }

    /// Train-mode forward. Caches intermediates for [`Layer::backward`].
    pub fn forward(&mut self, x: Tensor3<F>, rng: &mut ChaCha8Rng) -> Result<Tensor3<F>> {
        let out_shape = self.spec.output_shape((x.channels(), x.length()))?;
        let in_shape = x.shape();
        match self.spec {
            LayerSpec::Conv1d { kernel, stride, .. } => {
                let col = im2col(&x, kernel, stride);
                let y = conv_apply(
                    &self.params[0].value,
                    &self.params[1].value,
                    &col,
                    in_shape[0],
                    out_shape,
                    in_shape[1] * kernel,
                );
                self.cache = Cache::Conv { col, in_shape };
                Ok(y)
            }
            LayerSpec::BatchNorm1d { .. } => Ok(self.batchnorm_train(x)),
            LayerSpec::Relu => {
                let mut x = x;
                let mask: Vec<bool> = x.data().iter().map(|&v| v > F::zero()).collect();
                for (v, &m) in x.data_mut().iter_mut().zip(&mask) {
                    if !m {
                        *v = F::zero();
                    }
                }
                self.cache = Cache::Relu {
                    mask,
                    shape: in_shape,
                };
                Ok(x)
            }
            LayerSpec::MaxPool2 => {
                let (y, argmax) = maxpool2(&x);
                self.cache = Cache::MaxPool { argmax, in_shape };
                Ok(y)
            }
            LayerSpec::GlobalAvgPool => {
                self.cache = Cache::Shape(in_shape);
                Ok(global_avg(&x))
            }
            LayerSpec::Dense { out_features, .. } => {
                let y = dense_apply(
                    &self.params[0].value,
                    &self.params[1].value,
                    x.data(),
                    in_shape[0],
                    out_features,
                );
                self.cache = Cache::Dense {
                    input: x.into_vec(),
                    in_shape,
                };
                Ok(y)
            }
            LayerSpec::Dropout { p } => {
                let mut x = x;
                let keep = 1.0 - p;
                let scale = F::from_f64_lossy(1.0 / keep);
                let mask: Vec<F> = (0..x.data().len())
                    .map(|_| {
                        if rng.random::<f64>() < keep {
                            scale
                        } else {
                            F::zero()
                        }
                    })
                    .collect();
                for (v, &m) in x.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                self.cache = Cache::Dropout {
                    mask,
                    shape: in_shape,
                };
                Ok(x)
            }
            LayerSpec::Softmax => Ok(softmax_rows(x)),
        }
    }

    /// Eval-mode forward: dropout off, batch norm on running statistics.
    pub fn infer(&self, x: &Tensor3<F>) -> Result<Tensor3<F>> {
        let out_shape = self.spec.output_shape((x.channels(), x.length()))?;
        let in_shape = x.shape();
        Ok(match self.spec {
            LayerSpec::Conv1d { kernel, stride, .. } => {
                let col = im2col(x, kernel, stride);
                conv_apply(
                    &self.params[0].value,
                    &self.params[1].value,
                    &col,
                    in_shape[0],
                    out_shape,
                    in_shape[1] * kernel,
                )
            }
            LayerSpec::BatchNorm1d { .. } => {
                let mut y = x.clone();
                let (mean, var) = (&self.buffers[0].value, &self.buffers[1].value);
                let eps = F::from_f64_lossy(BN_EPS);
                let t = in_shape[2];
                for (row_idx, row) in y.data_mut().chunks_exact_mut(t).enumerate() {
                    let c = row_idx % in_shape[1];
                    let scale = self.params[0].value[c] / (var[c] + eps).sqrt();
                    let shift = self.params[1].value[c] - mean[c] * scale;
                    row.iter_mut().for_each(|v| *v = *v * scale + shift);
                }
                y
            }
            LayerSpec::Relu => {
                let mut y = x.clone();
                y.data_mut().iter_mut().for_each(|v| *v = v.max(F::zero()));
                y
            }
            LayerSpec::MaxPool2 => maxpool2(x).0,
            LayerSpec::GlobalAvgPool => global_avg(x),
            LayerSpec::Dense { out_features, .. } => dense_apply(
                &self.params[0].value,
                &self.params[1].value,
                x.data(),
                in_shape[0],
                out_features,
            ),
            LayerSpec::Dropout { .. } => x.clone(),
            LayerSpec::Softmax => softmax_rows(x.clone()),
        })
    }

    /// Reverse pass for the most recent train-mode forward. Accumulates into
    /// the parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: Tensor3<F>) -> Result<Tensor3<F>> {
        let cache = std::mem::take(&mut self.cache);
        match (&self.spec, cache) {
            (LayerSpec::Conv1d { kernel, stride, .. }, Cache::Conv { col, in_shape }) => {
                Ok(self.conv_backward(&dy, &col, in_shape, *kernel, *stride))
            }
            (
                LayerSpec::BatchNorm1d { .. },
                Cache::BatchNorm {
                    xhat,
                    inv_std,
                    shape,
                },
            ) => Ok(self.batchnorm_backward(dy, &xhat, &inv_std, shape)),
            (LayerSpec::Relu, Cache::Relu { mask, shape }) => {
                check_grad_shape(&dy, shape)?;
                let mut dx = dy;
                for (g, &m) in dx.data_mut().iter_mut().zip(&mask) {
                    if !m {
                        *g = F::zero();
                    }
                }
                Ok(dx)
            }
            (LayerSpec::MaxPool2, Cache::MaxPool { argmax, in_shape }) => {
                let mut dx = Tensor3::zeros(in_shape[0], in_shape[1], in_shape[2]);
                for (g, &src) in dy.data().iter().zip(&argmax) {
                    dx.data_mut()[src as usize] += *g;
                }
                Ok(dx)
            }
            (LayerSpec::GlobalAvgPool, Cache::Shape(in_shape)) => {
                let t = in_shape[2];
                let inv = F::one() / F::from_usize(t).unwrap();
                let data = dy
                    .data()
                    .iter()
                    .flat_map(|&g| std::iter::repeat_n(g * inv, t))
                    .collect();
                Tensor3::from_vec(in_shape[0], in_shape[1], t, data)
            }
            (
                LayerSpec::Dense {
                    in_features,
                    out_features,
                },
                Cache::Dense { input, in_shape },
            ) => {
                let b = in_shape[0];
                let (inf, outf) = (*in_features, *out_features);
                // dW[out, in] += dYᵀ[out, B] · X[B, in]
                F::gemm(
                    F::one(),
                    MatRef::rm(dy.data(), b, outf).t(),
                    MatRef::rm(&input, b, inf),
                    F::one(),
                    MatMut::rm(&mut self.params[0].grad, outf, inf),
                );
                for row in dy.data().chunks_exact(outf) {
                    for (gb, &g) in self.params[1].grad.iter_mut().zip(row) {
                        *gb += g;
                    }
                }
                let mut dx = vec![F::zero(); b * inf];
                F::gemm(
                    F::one(),
                    MatRef::rm(dy.data(), b, outf),
                    MatRef::rm(&self.params[0].value, outf, inf),
                    F::zero(),
                    MatMut::rm(&mut dx, b, inf),
                );
                Tensor3::from_vec(b, in_shape[1], in_shape[2], dx)
            }
            (LayerSpec::Dropout { .. }, Cache::Dropout { mask, shape }) => {
                check_grad_shape(&dy, shape)?;
                let mut dx = dy;
                for (g, &m) in dx.data_mut().iter_mut().zip(&mask) {
                    *g *= m;
                }
                Ok(dx)
            }
            (LayerSpec::Softmax, _) => Err(shape_err(
                "softmax is fused with the loss; backward through it is not supported",
            )),
            (spec, _) => Err(shape_err(format!(
                "backward on {} without a train-mode forward",
                spec.kind_name()
            ))),
        }
    }

    fn batchnorm_train(&mut self, mut x: Tensor3<F>) -> Tensor3<F> {
        let [b, c, t] = x.shape();
        let n = (b * t) as f64;
        let eps = F::from_f64_lossy(BN_EPS);
        let mom = F::from_f64_lossy(BN_MOMENTUM);
        let mut mean = vec![F::zero(); c];
        let mut var = vec![F::zero(); c];
        for (row_idx, row) in x.data().chunks_exact(t).enumerate() {
            mean[row_idx % c] += row.iter().copied().sum::<F>();
        }
        let inv_n = F::from_f64_lossy(1.0 / n);
        mean.iter_mut().for_each(|m| *m *= inv_n);
        for (row_idx, row) in x.data().chunks_exact(t).enumerate() {
            let m = mean[row_idx % c];
            var[row_idx % c] += row.iter().map(|&v| (v - m) * (v - m)).sum::<F>();
        }
        var.iter_mut().for_each(|v| *v *= inv_n);
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();

        let unbias = if n > 1.0 {
            F::from_f64_lossy(n / (n - 1.0))
        } else {
            F::one()
        };
        for ch in 0..c {
            let rm = &mut self.buffers[0].value[ch];
            *rm = (F::one() - mom) * *rm + mom * mean[ch];
            let rv = &mut self.buffers[1].value[ch];
            *rv = (F::one() - mom) * *rv + mom * var[ch] * unbias;
        }

        let mut xhat = vec![F::zero(); x.data().len()];
        for (row_idx, (row, xh)) in x
            .data_mut()
            .chunks_exact_mut(t)
            .zip(xhat.chunks_exact_mut(t))
            .enumerate()
        {
            let ch = row_idx % c;
            let (g, be) = (self.params[0].value[ch], self.params[1].value[ch]);
            for (v, h) in row.iter_mut().zip(xh.iter_mut()) {
                *h = (*v - mean[ch]) * inv_std[ch];
                *v = g * *h + be;
            }
        }
        self.cache = Cache::BatchNorm {
            xhat,
            inv_std,
            shape: [b, c, t],
        };
        x
    }

    fn batchnorm_backward(
        &mut self,
        mut dy: Tensor3<F>,
        xhat: &[F],
        inv_std: &[F],
        shape: [usize; 3],
    ) -> Tensor3<F> {
        let [b, c, t] = shape;
        let n = F::from_usize(b * t).unwrap();
        let mut sum_dy = vec![F::zero(); c];
        let mut sum_dy_xhat = vec![F::zero(); c];
        for (row_idx, (g, h)) in dy
            .data()
            .chunks_exact(t)
            .zip(xhat.chunks_exact(t))
            .enumerate()
        {
            let ch = row_idx % c;
            for (&gv, &hv) in g.iter().zip(h) {
                sum_dy[ch] += gv;
                sum_dy_xhat[ch] += gv * hv;
            }
        }
        for ch in 0..c {
            self.params[0].grad[ch] += sum_dy_xhat[ch];
            self.params[1].grad[ch] += sum_dy[ch];
        }
        // dx = γ·inv_std/n · (n·dy − Σdy − x̂·Σ(dy·x̂))
        for (row_idx, (g, h)) in dy
            .data_mut()
            .chunks_exact_mut(t)
            .zip(xhat.chunks_exact(t))
            .enumerate()
        {
            let ch = row_idx % c;
            let k = self.params[0].value[ch] * inv_std[ch] / n;
            for (gv, &hv) in g.iter_mut().zip(h) {
                *gv = k * (n * *gv - sum_dy[ch] - hv * sum_dy_xhat[ch]);
            }
        }
        dy
    }

    fn conv_backward(
        &mut self,
        dy: &Tensor3<F>,
        col: &[F],
        in_shape: [usize; 3],
        kernel: usize,
        stride: usize,
    ) -> Tensor3<F> {
        let [b, c, t] = in_shape;
        let m = dy.channels();
        let t_out = dy.length();
        let ck = c * kernel;
        let per_col = ck * t_out;
        let mut dcol = vec![F::zero(); per_col];
        let mut dx = Tensor3::zeros(b, c, t);
        let left = (kernel - 1) / 2;
        for bi in 0..b {
            let dy_b = dy.item(bi);
            let col_b = &col[bi * per_col..(bi + 1) * per_col];
            F::gemm(
                F::one(),
                MatRef::rm(dy_b, m, t_out),
                MatRef::rm(col_b, ck, t_out).t(),
                F::one(),
                MatMut::rm(&mut self.params[0].grad, m, ck),
            );
            for (gb, row) in self.params[1].grad.iter_mut().zip(dy_b.chunks_exact(t_out)) {
                *gb += row.iter().copied().sum::<F>();
            }
            F::gemm(
                F::one(),
                MatRef::rm(&self.params[0].value, m, ck).t(),
                MatRef::rm(dy_b, m, t_out),
                F::zero(),
                MatMut::rm(&mut dcol, ck, t_out),
            );
            let dx_b = dx.item_mut(bi);
            for ci in 0..c {
                for j in 0..kernel {
                    let row = &dcol[(ci * kernel + j) * t_out..(ci * kernel + j + 1) * t_out];
                    for (to, &g) in row.iter().enumerate() {
                        let src = (to * stride + j) as isize - left as isize;
                        if src >= 0 && (src as usize) < t {
                            dx_b[ci * t + src as usize] += g;
                        }
                    }
                }
            }
        }
        dx
    }
}

fn check_grad_shape<F: Real>(dy: &Tensor3<F>, shape: [usize; 3]) -> Result<()> {
    if dy.shape() != shape {
        return Err(shape_err(format!(
            "gradient shape {:?} vs activation {:?}",
            dy.shape(),
            shape
        )));
    }
    Ok(())
}

/// Per-item column buffers `[C·k, T_out]`, concatenated over the batch.
fn im2col<F: Real>(x: &Tensor3<F>, kernel: usize, stride: usize) -> Vec<F> {
    let [b, c, t] = x.shape();
    let t_out = t.div_ceil(stride);
    let left = (kernel - 1) / 2;
    let per = c * kernel * t_out;
    let mut col = vec![F::zero(); b * per];
    for bi in 0..b {
        let xb = x.item(bi);
        let cb = &mut col[bi * per..(bi + 1) * per];
        for ci in 0..c {
            let xr = &xb[ci * t..(ci + 1) * t];
            for j in 0..kernel {
                let row = &mut cb[(ci * kernel + j) * t_out..(ci * kernel + j + 1) * t_out];
                for (to, v) in row.iter_mut().enumerate() {
                    let src = (to * stride + j) as isize - left as isize;
                    if src >= 0 && (src as usize) < t {
                        *v = xr[src as usize];
                    }
                }
            }
        }
    }
    col
}

fn conv_apply<F: Real>(
    w: &[F],
    bias: &[F],
    col: &[F],
    b: usize,
    (m, t_out): (usize, usize),
    ck: usize,
) -> Tensor3<F> {
    let mut y = Tensor3::zeros(b, m, t_out);
    let per = ck * t_out;
    for bi in 0..b {
        let yb = y.item_mut(bi);
        for (row, &bv) in yb.chunks_exact_mut(t_out).zip(bias) {
            row.iter_mut().for_each(|v| *v = bv);
        }
        F::gemm(
            F::one(),
            MatRef::rm(w, m, ck),
            MatRef::rm(&col[bi * per..(bi + 1) * per], ck, t_out),
            F::one(),
            MatMut::rm(yb, m, t_out),
        );
    }
    y
}

fn dense_apply<F: Real>(w: &[F], bias: &[F], x: &[F], b: usize, out: usize) -> Tensor3<F> {
    let inf = x.len() / b.max(1);
    let mut y = vec![F::zero(); b * out];
    for row in y.chunks_exact_mut(out) {
        row.copy_from_slice(bias);
    }
    F::gemm(
        F::one(),
        MatRef::rm(x, b, inf),
        MatRef::rm(w, out, inf).t(),
        F::one(),
        MatMut::rm(&mut y, b, out),
    );
    Tensor3::from_vec(b, out, 1, y).expect("dense output shape")
}

fn maxpool2<F: Real>(x: &Tensor3<F>) -> (Tensor3<F>, Vec<u32>) {
    let [b, c, t] = x.shape();
    let t_out = t.div_ceil(2);
    let mut y = Tensor3::zeros(b, c, t_out);
    let mut argmax = Vec::with_capacity(b * c * t_out);
    for (r, (xr, yr)) in x
        .data()
        .chunks_exact(t)
        .zip(y.data_mut().chunks_exact_mut(t_out))
        .enumerate()
    {
        for (to, out) in yr.iter_mut().enumerate() {
            let i0 = 2 * to;
            let best = if i0 + 1 < t && xr[i0 + 1] > xr[i0] {
                i0 + 1
            } else {
                i0
            };
            *out = xr[best];
            argmax.push((r * t + best) as u32);
        }
    }
    (y, argmax)
}

fn global_avg<F: Real>(x: &Tensor3<F>) -> Tensor3<F> {
    let [b, c, t] = x.shape();
    let inv = F::one() / F::from_usize(t).unwrap();
    let data = x
        .data()
        .chunks_exact(t)
        .map(|r| r.iter().copied().sum::<F>() * inv)
        .collect();
    Tensor3::from_vec(b, c, 1, data).expect("pool output shape")
}

/// Numerically stabilized softmax over each row of a `(B, K, 1)` tensor.
pub fn softmax_rows<F: Real>(mut x: Tensor3<F>) -> Tensor3<F> {
    let w = x.channels() * x.length();
    for row in x.data_mut().chunks_exact_mut(w) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v = *v / sum);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    fn conv_with(
        weights: Vec<f64>,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
    ) -> Layer<f64> {
        let mut l = Layer::new(
            LayerSpec::Conv1d {
                in_channels: in_c,
                out_channels: out_c,
                kernel: k,
                stride,
            },
            "c",
            &mut rng(),
        );
        l.params[0].value = weights;
        l
    }

    #[test]
    fn centered_identity_kernel() {
        let l = conv_with(vec![0.0, 1.0, 0.0], 1, 1, 3, 1);
        let x = Tensor3::from_vec(1, 1, 5, vec![1.0, -2.0, 3.0, 0.5, 4.0]).unwrap();
        assert_eq!(l.infer(&x).unwrap(), x);
    }

    #[test]
    fn even_kernel_pads_right() {
        let l = conv_with(vec![1.0, 1.0], 1, 1, 2, 1);
        let x = Tensor3::from_vec(1, 1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(l.infer(&x).unwrap().into_vec(), vec![3.0, 5.0, 7.0, 4.0]);
    }

    #[test]
    fn strided_conv_halves_length() {
        let l = conv_with(vec![0.2; 6], 2, 1, 3, 2);
        let x = Tensor3::from_vec(3, 2, 8, vec![1.0; 48]).unwrap();
        assert_eq!(l.infer(&x).unwrap().shape(), [3, 1, 4]);
        let x = Tensor3::from_vec(1, 2, 7, vec![1.0; 14]).unwrap();
        assert_eq!(l.infer(&x).unwrap().length(), 4);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let l = conv_with(vec![0.0; 6], 2, 1, 3, 1);
        let x = Tensor3::from_vec(1, 3, 4, vec![0.0; 12]).unwrap();
        assert!(matches!(l.infer(&x), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn conv_bias_is_per_channel() {
        let mut l = conv_with(vec![0.0; 4], 1, 2, 2, 1);
        l.params[1].value = vec![1.5, -2.0];
        let y = l
            .infer(&Tensor3::from_vec(1, 1, 3, vec![9.0; 3]).unwrap())
            .unwrap();
        assert_eq!(y.into_vec(), vec![1.5, 1.5, 1.5, -2.0, -2.0, -2.0]);
    }

    fn bn(channels: usize) -> Layer<f64> {
        Layer::new(
            LayerSpec::BatchNorm1d {
                channels,
                zero_init: false,
            },
            "bn",
            &mut rng(),
        )
    }

    #[test]
    fn batchnorm_fixed_point_and_affine() {
        // per-channel zero mean, unit (biased) variance
        let x = Tensor3::from_vec(2, 1, 2, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let mut l = bn(1);
        let y = l.forward(x.clone(), &mut rng()).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
        l.params[0].value = vec![2.0];
        l.params[1].value = vec![1.0];
        let y = l.forward(x.clone(), &mut rng()).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - (2.0 * b + 1.0)).abs() < 1e-4);
        }
    }

    #[test]
    fn batchnorm_eval_at_running_mean_gives_beta() {
        let mut l = bn(2);
        l.buffers[0].value = vec![0.3, -1.2];
        l.buffers[1].value = vec![2.0, 0.5];
        l.params[1].value = vec![0.7, -0.4];
        let x = Tensor3::from_vec(1, 2, 3, vec![0.3, 0.3, 0.3, -1.2, -1.2, -1.2]).unwrap();
        let y = l.infer(&x).unwrap();
        for (a, b) in y.data().iter().zip([0.7, 0.7, 0.7, -0.4, -0.4, -0.4]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batchnorm_updates_running_stats() {
        let mut l = bn(1);
        let x = Tensor3::from_vec(1, 1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        l.forward(x, &mut rng()).unwrap();
        assert!((l.buffers[0].value[0] - 0.25).abs() < 1e-12);
        // unbiased batch variance 5/3
        assert!((l.buffers[1].value[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn pools() {
        let mp = Layer::<f64>::new(LayerSpec::MaxPool2, "p", &mut rng());
        let x = Tensor3::from_vec(1, 1, 4, vec![1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!(mp.infer(&x).unwrap().into_vec(), vec![3.0, 5.0]);
        let x = Tensor3::from_vec(1, 1, 3, vec![-4.0, -3.0, -7.0]).unwrap();
        assert_eq!(mp.infer(&x).unwrap().into_vec(), vec![-3.0, -7.0]);
        let c = Tensor3::from_vec(1, 1, 6, vec![2.5; 6]).unwrap();
        assert_eq!(mp.infer(&c).unwrap().into_vec(), vec![2.5; 3]);
        let gap = Layer::<f64>::new(LayerSpec::GlobalAvgPool, "g", &mut rng());
        let x = Tensor3::from_vec(1, 1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(gap.infer(&x).unwrap().into_vec(), vec![2.5]);
    }

    fn dense(w: Vec<f64>, b: Vec<f64>, inf: usize, outf: usize) -> Layer<f64> {
        let mut l = Layer::new(
            LayerSpec::Dense {
                in_features: inf,
                out_features: outf,
            },
            "d",
            &mut rng(),
        );
        l.params[0].value = w;
        l.params[1].value = b;
        l
    }

    #[test]
    fn dense_cases() {
        let l = dense(vec![1.0, 1.0, 1.0, -1.0], vec![0.0, 1.0], 2, 2);
        let x = Tensor3::from_vec(1, 2, 1, vec![1.0, 2.0]).unwrap();
        assert_eq!(l.infer(&x).unwrap().into_vec(), vec![3.0, 0.0]);
        let id = dense(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, 2);
        assert_eq!(id.infer(&x).unwrap().into_vec(), vec![1.0, 2.0]);
        let z = Tensor3::from_vec(1, 2, 1, vec![0.0, 0.0]).unwrap();
        assert_eq!(l.infer(&z).unwrap().into_vec(), vec![0.0, 1.0]);
        let wide = Tensor3::from_vec(1, 3, 1, vec![0.0; 3]).unwrap();
        assert!(matches!(l.infer(&wide), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn dropout_modes() {
        let x = Tensor3::from_vec(1, 4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let l = Layer::<f64>::new(LayerSpec::Dropout { p: 0.5 }, "dr", &mut rng());
        assert_eq!(l.infer(&x).unwrap(), x);
        let mut l0 = Layer::<f64>::new(LayerSpec::Dropout { p: 0.0 }, "dr", &mut rng());
        assert_eq!(l0.forward(x.clone(), &mut rng()).unwrap(), x);
    }

    #[test]
    fn dropout_is_unbiased() {
        // Monte-Carlo mean of 10^4 inverted-dropout masks per unit
        let mut l = Layer::<f64>::new(LayerSpec::Dropout { p: 0.5 }, "dr", &mut rng());
        let x = Tensor3::from_vec(1, 8, 1, vec![1.0, 2.0, -3.0, 4.0, 0.5, 6.0, -7.0, 8.0]).unwrap();
        let mut acc = vec![0.0; 8];
        let mut r = rng();
        let trials = 10_000;
        for _ in 0..trials {
            let y = l.forward(x.clone(), &mut r).unwrap();
            for (a, v) in acc.iter_mut().zip(y.data()) {
                *a += v;
            }
        }
        for (a, v) in acc.iter().zip(x.data()) {
            let mean = a / trials as f64;
            assert!((mean - v).abs() <= 0.03 * v.abs(), "{mean} vs {v}");
        }
    }

    #[test]
    fn relu_blocks_negative_gradients() {
        let mut l = Layer::<f64>::new(LayerSpec::Relu, "r", &mut rng());
        let x = Tensor3::from_vec(1, 1, 3, vec![-1.0, -0.5, -2.0]).unwrap();
        let y = l.forward(x, &mut rng()).unwrap();
        assert_eq!(y.into_vec(), vec![0.0; 3]);
        let dx = l
            .backward(Tensor3::from_vec(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap())
            .unwrap();
        assert_eq!(dx.into_vec(), vec![0.0; 3]);
    }

    #[test]
    fn backward_needs_forward() {
        let mut l = Layer::<f64>::new(LayerSpec::Relu, "r", &mut rng());
        assert!(l.backward(Tensor3::zeros(1, 1, 1)).is_err());
    }

    #[test]
    fn softmax_rows_are_stable() {
        let x = Tensor3::<f32>::from_vec(2, 3, 1, vec![1e4, -1e4, 0.0, 5.0, 5.0, 5.0]).unwrap();
        let p = softmax_rows(x);
        for row in p.data().chunks(3) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|v| v.is_finite()));
        }
    }
}
