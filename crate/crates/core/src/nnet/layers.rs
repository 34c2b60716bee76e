//! Layer kernels: forward in train/infer mode and the matching backward.
//!
//! Activations are batched `[N, C, H, W]` (or `[N, F]` after flattening).
//! Convolution is im2col over the whole batch followed by a single GEMM.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;

use super::spec::LayerSpec;
use super::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
pub(crate) enum Layer<T> {
    Conv {
        kernel: usize,
        stride: usize,
        pad: usize,
        weight: Tensor<T>,
        bias: Option<Tensor<T>>,
    },
    BatchNorm {
        epsilon: T,
        momentum: T,
        gamma: Tensor<T>,
        beta: Tensor<T>,
        running_mean: Tensor<T>,
        running_var: Tensor<T>,
    },
    ReLU,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    FullyConnected {
        weight: Tensor<T>,
        bias: Option<Tensor<T>>,
    },
    Flatten,
}

#[derive(Debug, Clone)]
pub(crate) enum Cache<T> {
    Conv {
        cols: Vec<T>,
        in_shape: Vec<usize>,
        out_hw: (usize, usize),
    },
    BatchNorm {
        x_hat: Vec<T>,
        inv_std: Vec<T>,
        batch_mean: Vec<T>,
        batch_var: Vec<T>,
        count: usize,
    },
    None,
    ReLU {
        mask: Vec<bool>,
    },
    MaxPool {
        argmax: Vec<u32>,
        in_shape: Vec<usize>,
    },
    FullyConnected {
        input: Tensor<T>,
    },
    Flatten {
        in_shape: Vec<usize>,
    },
}

fn mat<T: Scalar>(data: &[T], rows: usize, cols: usize) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((rows, cols), data).expect("matrix view")
}

fn mat_mut<T: Scalar>(data: &mut [T], rows: usize, cols: usize) -> ArrayViewMut2<'_, T> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("matrix view")
}

fn glorot<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.gen_range(-limit..=limit))).collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

impl<T: Scalar> Layer<T> {
    /// Builds a freshly initialised layer for the per-sample `input` shape.
    pub(crate) fn init<R: Rng>(spec: &LayerSpec, input: &[usize], rng: &mut R) -> Self {
        match *spec {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
                bias,
            } => {
                let c = input[0];
                Layer::Conv {
                    kernel,
                    stride,
                    pad,
                    weight: glorot(
                        rng,
                        &[out_channels, c, kernel, kernel],
                        c * kernel * kernel,
                        out_channels * kernel * kernel,
                    ),
                    bias: bias.then(|| Tensor::zeros(&[out_channels])),
                }
            }
            LayerSpec::BatchNorm {
                channels,
                epsilon,
                momentum,
            } => Layer::BatchNorm {
                epsilon: T::lit(epsilon),
                momentum: T::lit(momentum),
                gamma: Tensor::filled(&[channels], T::one()),
                beta: Tensor::zeros(&[channels]),
                running_mean: Tensor::zeros(&[channels]),
                running_var: Tensor::filled(&[channels], T::one()),
            },
            LayerSpec::ReLU => Layer::ReLU,
            LayerSpec::MaxPool { kernel, stride } => Layer::MaxPool { kernel, stride },
            LayerSpec::FullyConnected { out_features, bias } => {
                let fan_in = input[0];
                Layer::FullyConnected {
                    weight: glorot(rng, &[out_features, fan_in], fan_in, out_features),
                    bias: bias.then(|| Tensor::zeros(&[out_features])),
                }
            }
            LayerSpec::Flatten => Layer::Flatten,
        }
    }

    pub(crate) fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv { weight, bias, .. } | Layer::FullyConnected { weight, bias } => {
                std::iter::once(weight).chain(bias.as_ref()).collect()
            }
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => vec![],
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv { weight, bias, .. } | Layer::FullyConnected { weight, bias } => {
                std::iter::once(weight).chain(bias.as_mut()).collect()
            }
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => vec![],
        }
    }

    /// Non-trainable state (BatchNorm running statistics).
    pub(crate) fn state(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::BatchNorm {
                running_mean,
                running_var,
                ..
            } => vec![running_mean, running_var],
            _ => vec![],
        }
    }

    pub(crate) fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::BatchNorm {
                running_mean,
                running_var,
                ..
            } => vec![running_mean, running_var],
            _ => vec![],
        }
    }

    pub(crate) fn forward(&self, x: &Tensor<T>, mode: Mode) -> (Tensor<T>, Cache<T>) {
        match self {
            Layer::Conv {
                kernel,
                stride,
                pad,
                weight,
                bias,
            } => conv_forward(x, weight, bias.as_ref(), *kernel, *stride, *pad, mode),
            Layer::BatchNorm {
                epsilon,
                gamma,
                beta,
                running_mean,
                running_var,
                ..
            } => match mode {
                Mode::Train => bn_forward_train(x, gamma, beta, *epsilon),
                Mode::Infer => (
                    bn_forward_infer(x, gamma, beta, running_mean, running_var, *epsilon),
                    Cache::None,
                ),
            },
            Layer::ReLU => {
                let out = x.map(|v| if v > T::zero() { v } else { T::zero() });
                let cache = match mode {
                    Mode::Train => Cache::ReLU {
                        mask: x.data().iter().map(|&v| v > T::zero()).collect(),
                    },
                    Mode::Infer => Cache::None,
                };
                (out, cache)
            }
            Layer::MaxPool { kernel, stride } => maxpool_forward(x, *kernel, *stride, mode),
            Layer::FullyConnected { weight, bias } => {
                let out = fc_forward(x, weight, bias.as_ref());
                let cache = match mode {
                    Mode::Train => Cache::FullyConnected { input: x.clone() },
                    Mode::Infer => Cache::None,
                };
                (out, cache)
            }
            Layer::Flatten => {
                let n = x.shape()[0];
                let f = x.len() / n;
                let cache = Cache::Flatten {
                    in_shape: x.shape().to_vec(),
                };
                (x.clone().reshaped(&[n, f]), cache)
            }
        }
    }

    /// Returns the input gradient and the parameter gradients in
    /// [`Layer::params`] order.
    pub(crate) fn backward(&self, cache: &Cache<T>, grad_out: &Tensor<T>) -> (Tensor<T>, Vec<Tensor<T>>) {
        match (self, cache) {
            (
                Layer::Conv {
                    kernel,
                    stride,
                    pad,
                    weight,
                    bias,
                },
                Cache::Conv {
                    cols,
                    in_shape,
                    out_hw,
                },
            ) => {
                let (dx, mut grads) = conv_backward(grad_out, weight, cols, in_shape, *out_hw, *kernel, *stride, *pad);
                if bias.is_none() {
                    grads.pop();
                }
                (dx, grads)
            }
            (
                Layer::BatchNorm { gamma, .. },
                Cache::BatchNorm {
                    x_hat,
                    inv_std,
                    count,
                    ..
                },
            ) => bn_backward(grad_out, gamma, x_hat, inv_std, *count),
            (Layer::ReLU, Cache::ReLU { mask }) => {
                let mut g = grad_out.clone();
                for (v, &m) in g.data_mut().iter_mut().zip(mask) {
                    if !m {
                        *v = T::zero();
                    }
                }
                (g, vec![])
            }
            (Layer::MaxPool { .. }, Cache::MaxPool { argmax, in_shape }) => {
                let mut g = Tensor::zeros(in_shape);
                let gd = g.data_mut();
                for (&src, &dy) in argmax.iter().zip(grad_out.data()) {
                    gd[src as usize] += dy;
                }
                (g, vec![])
            }
            (Layer::FullyConnected { weight, bias }, Cache::FullyConnected { input }) => {
                let (dx, mut grads) = fc_backward(grad_out, weight, input);
                if bias.is_none() {
                    grads.pop();
                }
                (dx, grads)
            }
            (Layer::Flatten, Cache::Flatten { in_shape }) => (grad_out.clone().reshaped(in_shape), vec![]),
            _ => panic!("backward called with a cache from a different layer or mode"),
        }
    }

    /// Folds a train-mode batch's statistics into the running estimates.
    pub(crate) fn absorb_batch_stats(&mut self, cache: &Cache<T>) {
        if let (
            Layer::BatchNorm {
                momentum,
                running_mean,
                running_var,
                ..
            },
            Cache::BatchNorm {
                batch_mean,
                batch_var,
                count,
                ..
            },
        ) = (self, cache)
        {
            let m = *momentum;
            let unbias = if *count > 1 {
                T::from_usize_lossy(*count) / T::from_usize_lossy(count - 1)
            } else {
                T::one()
            };
            for (r, &b) in running_mean.data_mut().iter_mut().zip(batch_mean) {
                *r = (T::one() - m) * *r + m * b;
            }
            for (r, &b) in running_var.data_mut().iter_mut().zip(batch_var) {
                *r = (T::one() - m) * *r + m * b * unbias;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let p = oh * ow;
    let cols_n = n * p;
    let mut cols = vec![T::zero(); c * kernel * kernel * cols_n];
    for ci in 0..c {
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = (ci * kernel + ki) * kernel + kj;
                let dst_row = &mut cols[row * cols_n..(row + 1) * cols_n];
                for ni in 0..n {
                    let src = &x[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    for oy in 0..oh {
                        let iy = (oy * stride + ki) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = ni * p + oy * ow;
                        for ox in 0..ow {
                            let ix = (ox * stride + kj) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst_row[base + ox] = src[iy as usize * w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn conv_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    kernel: usize,
    stride: usize,
    pad: usize,
    mode: Mode,
) -> (Tensor<T>, Cache<T>) {
    let &[n, c, h, w] = x.shape() else {
        panic!("conv input must be 4-D");
    };
    let o = weight.shape()[0];
    let oh = (h + 2 * pad - kernel) / stride + 1;
    let ow = (w + 2 * pad - kernel) / stride + 1;
    let p = oh * ow;
    let k = c * kernel * kernel;
    let cols = im2col(x.data(), n, c, h, w, kernel, stride, pad, oh, ow);
    let mut out_mat = vec![T::zero(); o * n * p];
    general_mat_mul(
        T::one(),
        &mat(weight.data(), o, k),
        &mat(&cols, k, n * p),
        T::zero(),
        &mut mat_mut(&mut out_mat, o, n * p),
    );
    let mut out = Tensor::zeros(&[n, o, oh, ow]);
    let od = out.data_mut();
    for oi in 0..o {
        let b = bias.map_or(T::zero(), |b| b.data()[oi]);
        for ni in 0..n {
            let src = &out_mat[oi * n * p + ni * p..oi * n * p + (ni + 1) * p];
            let dst = &mut od[(ni * o + oi) * p..(ni * o + oi + 1) * p];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s + b;
            }
        }
    }
    let cache = match mode {
        Mode::Train => Cache::Conv {
            cols,
            in_shape: x.shape().to_vec(),
            out_hw: (oh, ow),
        },
        Mode::Infer => Cache::None,
    };
    (out, cache)
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    weight: &Tensor<T>,
    cols: &[T],
    in_shape: &[usize],
    (oh, ow): (usize, usize),
    kernel: usize,
    stride: usize,
    pad: usize,
) -> (Tensor<T>, Vec<Tensor<T>>) {
    let &[n, c, h, w] = in_shape else {
        unreachable!()
    };
    let o = weight.shape()[0];
    let p = oh * ow;
    let k = c * kernel * kernel;
    // [N, O, P] -> [O, N*P]
    let gd = grad_out.data();
    let mut dmat = vec![T::zero(); o * n * p];
    let mut db = Tensor::zeros(&[o]);
    for oi in 0..o {
        let mut acc = T::zero();
        for ni in 0..n {
            let src = &gd[(ni * o + oi) * p..(ni * o + oi + 1) * p];
            dmat[oi * n * p + ni * p..oi * n * p + (ni + 1) * p].copy_from_slice(src);
            acc += src.iter().copied().sum::<T>();
        }
        db.data_mut()[oi] = acc;
    }
    let mut dw = Tensor::zeros(weight.shape());
    general_mat_mul(
        T::one(),
        &mat(&dmat, o, n * p),
        &mat(cols, k, n * p).t(),
        T::zero(),
        &mut mat_mut(dw.data_mut(), o, k),
    );
    let mut dcols = vec![T::zero(); k * n * p];
    general_mat_mul(
        T::one(),
        &mat(weight.data(), o, k).t(),
        &mat(&dmat, o, n * p),
        T::zero(),
        &mut mat_mut(&mut dcols, k, n * p),
    );
    let mut dx = Tensor::zeros(in_shape);
    let dxd = dx.data_mut();
    let cols_n = n * p;
    for ci in 0..c {
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = (ci * kernel + ki) * kernel + kj;
                let src_row = &dcols[row * cols_n..(row + 1) * cols_n];
                for ni in 0..n {
                    let dst = &mut dxd[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    for oy in 0..oh {
                        let iy = (oy * stride + ki) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = ni * p + oy * ow;
                        for ox in 0..ow {
                            let ix = (ox * stride + kj) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[iy as usize * w + ix as usize] += src_row[base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, vec![dw, db])
}

/// Splits an activation shape into (batch, channels, per-channel spatial size).
fn bn_dims(shape: &[usize]) -> (usize, usize, usize) {
    let n = shape[0];
    let c = shape[1];
    let s: usize = shape[2..].iter().product();
    (n, c, s)
}

fn bn_forward_train<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> (Tensor<T>, Cache<T>) {
    let (n, c, s) = bn_dims(x.shape());
    let count = n * s;
    let m = T::from_usize_lossy(count);
    let xd = x.data();
    let mut out = Tensor::zeros(x.shape());
    let mut x_hat = vec![T::zero(); xd.len()];
    let mut inv_std = vec![T::zero(); c];
    let mut batch_mean = vec![T::zero(); c];
    let mut batch_var = vec![T::zero(); c];
    for ci in 0..c {
        let chunks = || (0..n).map(move |ni| (ni * c + ci) * s);
        let mut sum = T::zero();
        for o in chunks() {
            sum += xd[o..o + s].iter().copied().sum::<T>();
        }
        let mean = sum / m;
        let mut sq = T::zero();
        for o in chunks() {
            sq += xd[o..o + s].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
        }
        let var = sq / m;
        let istd = T::one() / (var + eps).sqrt();
        let (g, b) = (gamma.data()[ci], beta.data()[ci]);
        let od = out.data_mut();
        for o in chunks() {
            for i in o..o + s {
                let xh = (xd[i] - mean) * istd;
                x_hat[i] = xh;
                od[i] = g * xh + b;
            }
        }
        inv_std[ci] = istd;
        batch_mean[ci] = mean;
        batch_var[ci] = var;
    }
    (
        out,
        Cache::BatchNorm {
            x_hat,
            inv_std,
            batch_mean,
            batch_var,
            count,
        },
    )
}

fn bn_forward_infer<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mean: &Tensor<T>,
    var: &Tensor<T>,
    eps: T,
) -> Tensor<T> {
    let (n, c, s) = bn_dims(x.shape());
    let mut out = x.clone();
    let od = out.data_mut();
    for ci in 0..c {
        let scale = gamma.data()[ci] / (var.data()[ci] + eps).sqrt();
        let shift = beta.data()[ci] - mean.data()[ci] * scale;
        for ni in 0..n {
            let o = (ni * c + ci) * s;
            for v in &mut od[o..o + s] {
                *v = *v * scale + shift;
            }
        }
    }
    out
}

fn bn_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    gamma: &Tensor<T>,
    x_hat: &[T],
    inv_std: &[T],
    count: usize,
) -> (Tensor<T>, Vec<Tensor<T>>) {
    let (n, c, s) = bn_dims(grad_out.shape());
    let m = T::from_usize_lossy(count);
    let gd = grad_out.data();
    let mut dx = Tensor::zeros(grad_out.shape());
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    for ci in 0..c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xh = T::zero();
        for ni in 0..n {
            let o = (ni * c + ci) * s;
            for i in o..o + s {
                sum_dy += gd[i];
                sum_dy_xh += gd[i] * x_hat[i];
            }
        }
        dgamma.data_mut()[ci] = sum_dy_xh;
        dbeta.data_mut()[ci] = sum_dy;
        let g = gamma.data()[ci];
        let k = g * inv_std[ci] / m;
        let dxd = dx.data_mut();
        for ni in 0..n {
            let o = (ni * c + ci) * s;
            for i in o..o + s {
                dxd[i] = k * (m * gd[i] - sum_dy - x_hat[i] * sum_dy_xh);
            }
        }
    }
    (dx, vec![dgamma, dbeta])
}

fn maxpool_forward<T: Scalar>(x: &Tensor<T>, kernel: usize, stride: usize, mode: Mode) -> (Tensor<T>, Cache<T>) {
    let &[n, c, h, w] = x.shape() else {
        panic!("pool input must be 4-D");
    };
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let xd = x.data();
    let od = out.data_mut();
    let mut k = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let i = base + (oy * stride + ky) * w + ox * stride + kx;
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                }
                od[k] = xd[best];
                argmax.push(best as u32);
                k += 1;
            }
        }
    }
    let cache = match mode {
        Mode::Train => Cache::MaxPool {
            argmax,
            in_shape: x.shape().to_vec(),
        },
        Mode::Infer => Cache::None,
    };
    (out, cache)
}

fn fc_forward<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Tensor<T> {
    let n = x.shape()[0];
    let (o, i) = (weight.shape()[0], weight.shape()[1]);
    let mut out = Tensor::zeros(&[n, o]);
    if let Some(bias) = bias {
        for row in out.data_mut().chunks_mut(o) {
            row.copy_from_slice(bias.data());
        }
    }
    general_mat_mul(
        T::one(),
        &mat(x.data(), n, i),
        &mat(weight.data(), o, i).t(),
        T::one(),
        &mut mat_mut(out.data_mut(), n, o),
    );
    out
}

fn fc_backward<T: Scalar>(grad_out: &Tensor<T>, weight: &Tensor<T>, input: &Tensor<T>) -> (Tensor<T>, Vec<Tensor<T>>) {
    let n = input.shape()[0];
    let (o, i) = (weight.shape()[0], weight.shape()[1]);
    let mut dw = Tensor::zeros(weight.shape());
    general_mat_mul(
        T::one(),
        &mat(grad_out.data(), n, o).t(),
        &mat(input.data(), n, i),
        T::zero(),
        &mut mat_mut(dw.data_mut(), o, i),
    );
    let mut db = Tensor::zeros(&[o]);
    for row in grad_out.data().chunks(o) {
        for (d, &g) in db.data_mut().iter_mut().zip(row) {
            *d += g;
        }
    }
    let mut dx = Tensor::zeros(input.shape());
    general_mat_mul(
        T::one(),
        &mat(grad_out.data(), n, o),
        &mat(weight.data(), o, i),
        T::zero(),
        &mut mat_mut(dx.data_mut(), n, i),
    );
    (dx, vec![dw, db])
}
