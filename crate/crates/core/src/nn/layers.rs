//! Layer kernels: forward evaluation with the cache each layer needs for its
//! backward pass. All spatial tensors are `[batch, channels, height, width]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scalar::{gemm, Mat, Scalar};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Variance floor inside the batch-norm square root.
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Linear {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    BatchNorm2d {
        channels: usize,
    },
    Relu,
    /// 2x2 window, stride 2, ceiling mode.
    MaxPool2x2,
    /// Inverted dropout: kept activations are scaled by `1 / (1 - rate)` at train time.
    Dropout {
        rate: f64,
    },
    /// Nearest-neighbour x2 upsampling followed by a top-left crop to `crop x crop`.
    Upsample2x {
        crop: usize,
    },
    /// `(Z + Z^T) / 2` on every channel.
    Symmetrize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub suffix: &'static str,
    pub shape: Vec<usize>,
    pub trainable: bool,
    /// Fan-in for He initialization; `None` for constant-initialized tensors.
    pub fan_in: Option<usize>,
    pub init_value: f64,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Linear { .. } => "linear",
            Layer::Conv2d { kernel: 1, .. } => "conv1x1",
            Layer::Conv2d { .. } => "conv",
            Layer::BatchNorm2d { .. } => "batchnorm",
            Layer::Relu => "relu",
            Layer::MaxPool2x2 => "maxpool",
            Layer::Dropout { .. } => "dropout",
            Layer::Upsample2x { .. } => "upsample",
            Layer::Symmetrize => "symmetrize",
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let he = |suffix, shape: Vec<usize>, fan_in| ParamSpec {
            suffix,
            shape,
            trainable: true,
            fan_in: Some(fan_in),
            init_value: 0.0,
        };
        let constant = |suffix, n, trainable, v| ParamSpec {
            suffix,
            shape: vec![n],
            trainable,
            fan_in: None,
            init_value: v,
        };
        match *self {
            Layer::Linear { inputs, outputs } => vec![
                he("weight", vec![outputs, inputs], inputs),
                constant("bias", outputs, true, 0.0),
            ],
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                he(
                    "weight",
                    vec![out_channels, in_channels, kernel, kernel],
                    in_channels * kernel * kernel,
                ),
                constant("bias", out_channels, true, 0.0),
            ],
            Layer::BatchNorm2d { channels } => vec![
                constant("gamma", channels, true, 1.0),
                constant("beta", channels, true, 0.0),
                constant("running_mean", channels, false, 0.0),
                constant("running_var", channels, false, 1.0),
            ],
            _ => Vec::new(),
        }
    }

    /// Output item shape (without batch) for an input item shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let spatial = |what: &str| -> Result<(usize, usize, usize)> {
            match *input {
                [c, h, w] => Ok((c, h, w)),
                _ => Err(Error::Shape(format!("{what} expects [C,H,W], got {input:?}"))),
            }
        };
        match *self {
            Layer::Linear { inputs, outputs } => {
                if input != [inputs] {
                    return Err(Error::Shape(format!(
                        "linear expects [{inputs}], got {input:?}"
                    )));
                }
                Ok(vec![outputs])
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => {
                let (c, h, w) = spatial("conv")?;
                if c != in_channels || h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(Error::Shape(format!(
                        "conv {in_channels}->{out_channels} k{kernel} cannot take {input:?}"
                    )));
                }
                Ok(vec![
                    out_channels,
                    h + 2 * padding - kernel + 1,
                    w + 2 * padding - kernel + 1,
                ])
            }
            Layer::BatchNorm2d { channels } => {
                let (c, _, _) = spatial("batchnorm")?;
                if c != channels {
                    return Err(Error::Shape(format!(
                        "batchnorm over {channels} channels got {c}"
                    )));
                }
                Ok(input.to_vec())
            }
            Layer::MaxPool2x2 => {
                let (c, h, w) = spatial("maxpool")?;
                Ok(vec![c, h.div_ceil(2), w.div_ceil(2)])
            }
            Layer::Upsample2x { crop } => {
                let (c, h, w) = spatial("upsample")?;
                if crop > 2 * h || crop > 2 * w {
                    return Err(Error::Shape(format!(
                        "cannot crop {crop} from a x2 upsample of {h}x{w}"
                    )));
                }
                Ok(vec![c, crop, crop])
            }
            Layer::Symmetrize => {
                let (_, h, w) = spatial("symmetrize")?;
                if h != w {
                    return Err(Error::Shape(format!("symmetrize needs square maps, got {h}x{w}")));
                }
                Ok(input.to_vec())
            }
            Layer::Relu | Layer::Dropout { .. } => Ok(input.to_vec()),
        }
    }
}

/// Batch statistics gathered by a train-mode batch-norm pass.
#[derive(Debug, Clone)]
pub(crate) struct BnStats {
    pub mean: Vec<f64>,
    pub var_unbiased: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) enum Cache<T> {
    Nothing,
    Input(Tensor<T>),
    BatchNorm {
        x_hat: Vec<T>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Relu(Vec<bool>),
    MaxPool {
        argmax: Vec<u32>,
        in_shape: Vec<usize>,
    },
    Dropout(Vec<T>),
    Upsample(Vec<usize>),
}

impl<T> Cache<T> {
    /// Piecewise-linear branch taken by this layer (ReLU masks, pooling winners).
    pub(crate) fn branch_pattern(&self) -> Option<Pattern<'_>> {
        match self {
            Cache::Relu(mask) => Some(Pattern::Mask(mask)),
            Cache::MaxPool { argmax, .. } => Some(Pattern::Argmax(argmax)),
            _ => None,
        }
    }
}

#[derive(Debug, PartialEq)]
pub(crate) enum Pattern<'a> {
    Mask(&'a [bool]),
    Argmax(&'a [u32]),
}

fn dims4(shape: &[usize]) -> (usize, usize, usize, usize) {
    match *shape {
        [b, c, h, w] => (b, c, h, w),
        _ => panic!("expected a 4-d tensor, got {shape:?}"),
    }
}

pub(crate) fn forward<T: Scalar, R: Rng + ?Sized>(
    layer: &Layer,
    params: &[&Tensor<T>],
    x: Tensor<T>,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<T>, Cache<T>, Option<BnStats>)> {
    let out_item = layer.output_shape(&x.shape()[1..])?;
    let batch = x.batch();
    let mut out_shape = vec![batch];
    out_shape.extend_from_slice(&out_item);

    Ok(match *layer {
        Layer::Linear { inputs, outputs } => {
            let (w, b) = (params[0].data(), params[1].data());
            let mut y = Tensor::zeros(&out_shape);
            for row in y.data_mut().chunks_mut(outputs) {
                row.copy_from_slice(b);
            }
            gemm(
                Mat::new(x.data(), batch, inputs),
                Mat::new(w, outputs, inputs).t(),
                T::ONE,
                y.data_mut(),
            );
            (y, Cache::Input(x), None)
        }
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
            padding,
        } => {
            let (_, _, h, w) = dims4(x.shape());
            let (ho, wo) = (out_item[1], out_item[2]);
            let k_len = in_channels * kernel * kernel;
            let (wt, bias) = (params[0].data(), params[1].data());
            let mut y = Tensor::zeros(&out_shape);
            let mut col = vec![T::ZERO; k_len * ho * wo];
            let in_item = x.item_len();
            let out_len = out_channels * ho * wo;
            for bi in 0..batch {
                let xb = &x.data()[bi * in_item..(bi + 1) * in_item];
                im2col(xb, in_channels, h, w, kernel, padding, ho, wo, &mut col);
                let yb = &mut y.data_mut()[bi * out_len..(bi + 1) * out_len];
                for (c, plane) in yb.chunks_mut(ho * wo).enumerate() {
                    plane.fill(bias[c]);
                }
                gemm(
                    Mat::new(wt, out_channels, k_len),
                    Mat::new(&col, k_len, ho * wo),
                    T::ONE,
                    yb,
                );
            }
            (y, Cache::Input(x), None)
        }
        Layer::BatchNorm2d { channels } => {
            let (b, c, h, w) = dims4(x.shape());
            debug_assert_eq!(c, channels);
            let hw = h * w;
            let (gamma, beta) = (params[0].data(), params[1].data());
            let use_batch = mode == Mode::Train;
            let count = (b * hw) as f64;
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            if use_batch {
                for ch in 0..c {
                    let mut s = 0.0;
                    for bi in 0..b {
                        let off = (bi * c + ch) * hw;
                        s += x.data()[off..off + hw].iter().map(|v| v.to_f64()).sum::<f64>();
                    }
                    mean[ch] = s / count;
                    let mut ss = 0.0;
                    for bi in 0..b {
                        let off = (bi * c + ch) * hw;
                        ss += x.data()[off..off + hw]
                            .iter()
                            .map(|v| (v.to_f64() - mean[ch]).powi(2))
                            .sum::<f64>();
                    }
                    var[ch] = ss / count;
                }
            } else {
                for ch in 0..c {
                    mean[ch] = params[2].data()[ch].to_f64();
                    var[ch] = params[3].data()[ch].to_f64();
                }
            }
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut x_hat = vec![T::ZERO; x.len()];
            let mut y = Tensor::zeros(&out_shape);
            for bi in 0..b {
                for ch in 0..c {
                    let off = (bi * c + ch) * hw;
                    let (m, s) = (mean[ch], inv_std[ch]);
                    for i in off..off + hw {
                        let xh = T::from_f64((x.data()[i].to_f64() - m) * s);
                        x_hat[i] = xh;
                        y.data_mut()[i] = gamma[ch] * xh + beta[ch];
                    }
                }
            }
            let stats = use_batch.then(|| {
                let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                BnStats {
                    mean,
                    var_unbiased: var.iter().map(|v| v * unbias).collect(),
                }
            });
            (
                y,
                Cache::BatchNorm {
                    x_hat,
                    inv_std,
                    batch_stats: use_batch,
                },
                stats,
            )
        }
        Layer::Relu => {
            let mut x = x;
            let mask: Vec<bool> = x.data().iter().map(|&v| v > T::ZERO).collect();
            for (v, &keep) in x.data_mut().iter_mut().zip(&mask) {
                if !keep {
                    *v = T::ZERO;
                }
            }
            (x, Cache::Relu(mask), None)
        }
        Layer::MaxPool2x2 => {
            let (b, c, h, w) = dims4(x.shape());
            let (ho, wo) = (out_item[1], out_item[2]);
            let mut y = Tensor::zeros(&out_shape);
            let mut argmax = vec![0u32; y.len()];
            let mut o = 0;
            for plane in 0..b * c {
                let base = plane * h * w;
                for i in 0..ho {
                    for j in 0..wo {
                        let mut best = base + 2 * i * w + 2 * j;
                        for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                            let (r, s) = (2 * i + di, 2 * j + dj);
                            if r < h && s < w {
                                let idx = base + r * w + s;
                                if x.data()[idx] > x.data()[best] {
                                    best = idx;
                                }
                            }
                        }
                        y.data_mut()[o] = x.data()[best];
                        argmax[o] = best as u32;
                        o += 1;
                    }
                }
            }
            let in_shape = x.shape().to_vec();
            (y, Cache::MaxPool { argmax, in_shape }, None)
        }
        Layer::Dropout { rate } => {
            if mode == Mode::Infer || rate == 0.0 {
                (x, Cache::Nothing, None)
            } else {
                let keep = T::from_f64(1.0 / (1.0 - rate));
                let mut x = x;
                let scale: Vec<T> = (0..x.len())
                    .map(|_| if rng.random::<f64>() < rate { T::ZERO } else { keep })
                    .collect();
                for (v, s) in x.data_mut().iter_mut().zip(&scale) {
                    *v *= *s;
                }
                (x, Cache::Dropout(scale), None)
            }
        }
        Layer::Upsample2x { crop } => {
            let (b, c, h, w) = dims4(x.shape());
            let mut y = Tensor::zeros(&out_shape);
            for plane in 0..b * c {
                let src = &x.data()[plane * h * w..(plane + 1) * h * w];
                let dst = &mut y.data_mut()[plane * crop * crop..(plane + 1) * crop * crop];
                for i in 0..crop {
                    for j in 0..crop {
                        dst[i * crop + j] = src[(i / 2) * w + j / 2];
                    }
                }
            }
            let in_shape = x.shape().to_vec();
            (y, Cache::Upsample(in_shape), None)
        }
        Layer::Symmetrize => {
            let (b, c, n, _) = dims4(x.shape());
            let mut y = Tensor::zeros(&out_shape);
            let half = T::from_f64(0.5);
            for plane in 0..b * c {
                let z = &x.data()[plane * n * n..(plane + 1) * n * n];
                let out = &mut y.data_mut()[plane * n * n..(plane + 1) * n * n];
                for i in 0..n {
                    for j in 0..n {
                        // Addition commutes exactly, so out[i][j] == out[j][i] bitwise.
                        out[i * n + j] = (z[i * n + j] + z[j * n + i]) * half;
                    }
                }
            }
            (y, Cache::Nothing, None)
        }
    })
}

/// Back-propagates `grad_out` through one layer, accumulating parameter
/// gradients into `param_grads`. Returns the input gradient when requested.
pub(crate) fn backward<T: Scalar>(
    layer: &Layer,
    params: &[&Tensor<T>],
    cache: &Cache<T>,
    grad_out: Tensor<T>,
    need_input_grad: bool,
    param_grads: &mut [Tensor<T>],
) -> Result<Option<Tensor<T>>> {
    let batch = grad_out.batch();
    Ok(match (layer, cache) {
        (&Layer::Linear { inputs, outputs }, Cache::Input(x)) => {
            let dy = grad_out.data();
            {
                let (gw, rest) = param_grads.split_at_mut(1);
                gemm(
                    Mat::new(dy, batch, outputs).t(),
                    Mat::new(x.data(), batch, inputs),
                    T::ONE,
                    gw[0].data_mut(),
                );
                let gb = rest[0].data_mut();
                for row in dy.chunks(outputs) {
                    for (g, v) in gb.iter_mut().zip(row) {
                        *g += *v;
                    }
                }
            }
            need_input_grad.then(|| {
                let mut dx = Tensor::zeros(x.shape());
                gemm(
                    Mat::new(dy, batch, outputs),
                    Mat::new(params[0].data(), outputs, inputs),
                    T::ZERO,
                    dx.data_mut(),
                );
                dx
            })
        }
        (
            &Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            },
            Cache::Input(x),
        ) => {
            let (_, _, h, w) = dims4(x.shape());
            let (_, _, ho, wo) = dims4(grad_out.shape());
            let k_len = in_channels * kernel * kernel;
            let hw = ho * wo;
            let in_item = x.item_len();
            let out_len = out_channels * hw;
            let mut col = vec![T::ZERO; k_len * hw];
            let mut dcol = if need_input_grad {
                vec![T::ZERO; k_len * hw]
            } else {
                Vec::new()
            };
            let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
            let (gw, rest) = param_grads.split_at_mut(1);
            for bi in 0..batch {
                let xb = &x.data()[bi * in_item..(bi + 1) * in_item];
                let dyb = &grad_out.data()[bi * out_len..(bi + 1) * out_len];
                im2col(xb, in_channels, h, w, kernel, padding, ho, wo, &mut col);
                gemm(
                    Mat::new(dyb, out_channels, hw),
                    Mat::new(&col, k_len, hw).t(),
                    T::ONE,
                    gw[0].data_mut(),
                );
                for (g, plane) in rest[0].data_mut().iter_mut().zip(dyb.chunks(hw)) {
                    *g += plane.iter().copied().sum::<T>();
                }
                if let Some(dx) = dx.as_mut() {
                    gemm(
                        Mat::new(params[0].data(), out_channels, k_len).t(),
                        Mat::new(dyb, out_channels, hw),
                        T::ZERO,
                        &mut dcol,
                    );
                    let dxb = &mut dx.data_mut()[bi * in_item..(bi + 1) * in_item];
                    col2im(&dcol, in_channels, h, w, kernel, padding, ho, wo, dxb);
                }
            }
            dx
        }
        (
            &Layer::BatchNorm2d { .. },
            Cache::BatchNorm {
                x_hat,
                inv_std,
                batch_stats,
            },
        ) => {
            let (b, c, h, w) = dims4(grad_out.shape());
            let hw = h * w;
            let count = (b * hw) as f64;
            let gamma = params[0].data();
            let dy = grad_out.data();
            let mut sum_dy = vec![0.0f64; c];
            let mut sum_dy_xhat = vec![0.0f64; c];
            for bi in 0..b {
                for ch in 0..c {
                    let off = (bi * c + ch) * hw;
                    for i in off..off + hw {
                        sum_dy[ch] += dy[i].to_f64();
                        sum_dy_xhat[ch] += dy[i].to_f64() * x_hat[i].to_f64();
                    }
                }
            }
            {
                let (gg, gb) = param_grads.split_at_mut(1);
                for ch in 0..c {
                    gg[0].data_mut()[ch] += T::from_f64(sum_dy_xhat[ch]);
                    gb[0].data_mut()[ch] += T::from_f64(sum_dy[ch]);
                }
            }
            need_input_grad.then(|| {
                let mut dx = Tensor::zeros(grad_out.shape());
                for bi in 0..b {
                    for ch in 0..c {
                        let off = (bi * c + ch) * hw;
                        let g = gamma[ch].to_f64();
                        let s = inv_std[ch];
                        for i in off..off + hw {
                            let v = if *batch_stats {
                                g * s / count
                                    * (count * dy[i].to_f64()
                                        - sum_dy[ch]
                                        - x_hat[i].to_f64() * sum_dy_xhat[ch])
                            } else {
                                g * s * dy[i].to_f64()
                            };
                            dx.data_mut()[i] = T::from_f64(v);
                        }
                    }
                }
                dx
            })
        }
        (Layer::Relu, Cache::Relu(mask)) => need_input_grad.then(|| {
            let mut dx = grad_out;
            for (g, &keep) in dx.data_mut().iter_mut().zip(mask) {
                if !keep {
                    *g = T::ZERO;
                }
            }
            dx
        }),
        (Layer::MaxPool2x2, Cache::MaxPool { argmax, in_shape }) => need_input_grad.then(|| {
            let mut dx = Tensor::zeros(in_shape);
            for (g, &idx) in grad_out.data().iter().zip(argmax) {
                dx.data_mut()[idx as usize] += *g;
            }
            dx
        }),
        (Layer::Dropout { .. }, Cache::Nothing) => need_input_grad.then_some(grad_out),
        (Layer::Dropout { .. }, Cache::Dropout(scale)) => need_input_grad.then(|| {
            let mut dx = grad_out;
            for (g, s) in dx.data_mut().iter_mut().zip(scale) {
                *g *= *s;
            }
            dx
        }),
        (&Layer::Upsample2x { crop }, Cache::Upsample(in_shape)) => need_input_grad.then(|| {
            let (b, c, h, w) = dims4(in_shape);
            let mut dx = Tensor::zeros(in_shape);
            for plane in 0..b * c {
                let src = &grad_out.data()[plane * crop * crop..(plane + 1) * crop * crop];
                let dst = &mut dx.data_mut()[plane * h * w..(plane + 1) * h * w];
                for i in 0..crop {
                    for j in 0..crop {
                        dst[(i / 2) * w + j / 2] += src[i * crop + j];
                    }
                }
            }
            dx
        }),
        (Layer::Symmetrize, Cache::Nothing) => need_input_grad.then(|| {
            let (b, c, n, _) = dims4(grad_out.shape());
            let half = T::from_f64(0.5);
            let mut dx = Tensor::zeros(grad_out.shape());
            for plane in 0..b * c {
                let g = &grad_out.data()[plane * n * n..(plane + 1) * n * n];
                let out = &mut dx.data_mut()[plane * n * n..(plane + 1) * n * n];
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = (g[i * n + j] + g[j * n + i]) * half;
                    }
                }
            }
            dx
        }),
        (layer, _) => {
            return Err(Error::Shape(format!(
                "cache does not belong to a {} layer",
                layer.kind()
            )))
        }
    })
}

/// Unfolds `x` (`[C,H,W]`) into a `[C*k*k, Ho*Wo]` patch matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    col: &mut [T],
) {
    let mut row = 0;
    for c in 0..channels {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let dst = &mut col[row * ho * wo..(row + 1) * ho * wo];
                for oi in 0..ho {
                    let ii = (oi + ki) as isize - pad as isize;
                    let line = &mut dst[oi * wo..(oi + 1) * wo];
                    if ii < 0 || ii >= h as isize {
                        line.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[ii as usize * w..(ii as usize + 1) * w];
                    for (oj, v) in line.iter_mut().enumerate() {
                        let jj = (oj + kj) as isize - pad as isize;
                        *v = if jj < 0 || jj >= w as isize {
                            T::ZERO
                        } else {
                            src[jj as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto `[C,H,W]`.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    col: &[T],
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    x: &mut [T],
) {
    x.fill(T::ZERO);
    let mut row = 0;
    for c in 0..channels {
        let plane = &mut x[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let src = &col[row * ho * wo..(row + 1) * ho * wo];
                for oi in 0..ho {
                    let ii = (oi + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * w..(ii as usize + 1) * w];
                    for oj in 0..wo {
                        let jj = (oj + kj) as isize - pad as isize;
                        if jj >= 0 && jj < w as isize {
                            dst[jj as usize] += src[oi * wo + oj];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}
