//! Central finite-difference checks of the analytic gradients, in 64-bit.
//!
//! The relative error of one coordinate is `|a - n| / max(|a|, |n|, floor)`.
//! Coordinates whose `±eps` perturbation flips a ReLU mask or a pooling winner
//! are skipped, since the loss is not differentiable across such a kink.
//! Coordinates where both gradients are below the resolution of the difference
//! quotient (a bias feeding batch norm, for one) are counted as `unresolved`.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::layers::{self, Layer, Mode};
use super::model::{init_params, mse_loss, Model, ModelConfig};
use super::tensor::Tensor;
use crate::error::Result;

/// Denominator floor for the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates sampled per layer kind (all of them when fewer exist).
    pub coords_per_kind: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            coords_per_kind: 200,
            batch: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct KindResult {
    pub checked: usize,
    pub skipped: usize,
    pub unresolved: usize,
    pub max_rel_error: f64,
}

impl KindResult {
    /// `lp` and `lm` are the losses at `+eps` and `-eps`.
    fn record(&mut self, analytic: f64, lp: f64, lm: f64, eps: f64) {
        let numeric = (lp - lm) / (2.0 * eps);
        let resolution = 100.0 * f64::EPSILON * lp.abs().max(lm.abs()).max(1.0) / eps;
        if analytic.abs() <= resolution && numeric.abs() <= resolution {
            self.unresolved += 1;
            return;
        }
        let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        self.max_rel_error = self.max_rel_error.max((analytic - numeric).abs() / denom);
        self.checked += 1;
    }

    fn merge(&mut self, other: &KindResult) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.unresolved += other.unresolved;
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
    }
}

/// Per-kind results keyed by layer kind (`linear`, `conv`, `batchnorm`, ...).
#[derive(Debug, Clone, Default, Serialize)]
pub struct GradCheckReport {
    pub kinds: BTreeMap<String, KindResult>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.kinds.values().map(|k| k.max_rel_error).fold(0.0, f64::max)
    }

    fn add(&mut self, kind: &str, r: &KindResult) {
        self.kinds.entry(kind.to_string()).or_default().merge(r);
    }
}

fn randn(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Checks a whole network (dropout disabled, batch-norm on batch statistics)
/// against the mean squared error to a random target.
///
/// Parameter coordinates are grouped by the kind of layer that owns them; the
/// `input` entry covers gradients with respect to the network input.
pub fn gradient_check(config: ModelConfig, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let config = config.with_dropout(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut model = Model::<f64>::from_params(config, init_params(&config, opts.seed))?;
    // Move batch-norm affine terms off their trivial initial values.
    for e in &mut model.params_mut().entries {
        if e.name.ends_with(".gamma") || e.name.ends_with(".beta") || e.name.ends_with(".bias") {
            for v in e.tensor.data_mut() {
                *v += 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            }
        }
    }
    let mut shape = vec![opts.batch];
    shape.extend(config.input_shape());
    let len: usize = shape.iter().product();
    let input_data: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
    let input = Tensor::new(shape, input_data)?;
    let unused = &mut ChaCha8Rng::seed_from_u64(0);
    let base = model.forward(&input, Mode::Train, unused)?;
    let target_data: Vec<f64> = randn(&mut rng, base.output.len()).iter().map(|v| v.abs()).collect();
    let target = Tensor::new(base.output.shape().to_vec(), target_data)?;
    let (_, g_out) = mse_loss(&base.output, &target)?;
    let grads = model.backward(&base, g_out, true)?;

    let loss_at = |m: &Model<f64>, x: &Tensor<f64>| -> Result<(f64, bool)> {
        let pass = m.forward(x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0))?;
        let same = pass.same_branches(&base);
        Ok((mse_loss(&pass.output, &target)?.0, same))
    };

    // Candidate coordinates per kind: (entry index, flat index).
    let mut by_kind: BTreeMap<&'static str, Vec<(usize, usize)>> = BTreeMap::new();
    let ranges: Vec<_> = model.layer_param_ranges().map(|(l, r)| (l.kind(), r)).collect();
    for (kind, range) in ranges {
        for idx in range {
            let e = &model.params().entries[idx];
            if e.trainable {
                by_kind
                    .entry(kind)
                    .or_default()
                    .extend((0..e.tensor.len()).map(|k| (idx, k)));
            }
        }
    }

    let mut report = GradCheckReport::default();
    for (kind, coords) in by_kind {
        let mut res = KindResult::default();
        for pick in sample_indices(&mut rng, coords.len(), opts.coords_per_kind) {
            let (idx, k) = coords[pick];
            let orig = model.params().entries[idx].tensor.data()[k];
            model.params_mut().entries[idx].tensor.data_mut()[k] = orig + opts.eps;
            let (lp, sp) = loss_at(&model, &input)?;
            model.params_mut().entries[idx].tensor.data_mut()[k] = orig - opts.eps;
            let (lm, sm) = loss_at(&model, &input)?;
            model.params_mut().entries[idx].tensor.data_mut()[k] = orig;
            if !(sp && sm) {
                res.skipped += 1;
                continue;
            }
            res.record(grads.params[idx].data()[k], lp, lm, opts.eps);
        }
        report.add(kind, &res);
    }

    let g_in = grads.input.expect("input gradient requested");
    let mut res = KindResult::default();
    for k in sample_indices(&mut rng, input.len(), opts.coords_per_kind) {
        let mut xp = input.clone();
        xp.data_mut()[k] += opts.eps;
        let (lp, sp) = loss_at(&model, &xp)?;
        let mut xm = input.clone();
        xm.data_mut()[k] -= opts.eps;
        let (lm, sm) = loss_at(&model, &xm)?;
        if !(sp && sm) {
            res.skipped += 1;
            continue;
        }
        res.record(g_in.data()[k], lp, lm, opts.eps);
    }
    report.add("input", &res);
    Ok(report)
}

fn sample_indices(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    if n >= len {
        (0..len).collect()
    } else {
        index::sample(rng, len, n).into_vec()
    }
}

/// Checks one layer in isolation on a random input of item shape `item_shape`,
/// using the loss `sum(w * y)` for a random `w`. Both input and parameter
/// gradients are covered. Every evaluation reuses the same random stream, so a
/// dropout layer keeps its mask across perturbations.
pub fn layer_gradient_check(
    layer: &Layer,
    item_shape: &[usize],
    opts: &GradCheckOptions,
) -> Result<KindResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut params: Vec<Tensor<f64>> = layer
        .param_specs()
        .iter()
        .map(|s| {
            let len: usize = s.shape.iter().product();
            let data = match s.fan_in {
                Some(fan_in) => randn(&mut rng, len).iter().map(|v| v * (2.0 / fan_in as f64).sqrt()).collect(),
                None => randn(&mut rng, len).iter().map(|v| s.init_value + 0.3 * v).collect(),
            };
            Tensor::new(s.shape.clone(), data)
        })
        .collect::<Result<_>>()?;
    let mut shape = vec![opts.batch];
    shape.extend_from_slice(item_shape);
    let len: usize = shape.iter().product();
    let input = Tensor::new(shape, randn(&mut rng, len))?;
    let mask_seed: u64 = rng.random();

    let run = |params: &[Tensor<f64>], x: &Tensor<f64>| {
        let refs: Vec<&Tensor<f64>> = params.iter().collect();
        layers::forward(layer, &refs, x.clone(), Mode::Train, &mut ChaCha8Rng::seed_from_u64(mask_seed))
    };
    let (y, cache, _) = run(&params, &input)?;
    let w = randn(&mut rng, y.len());
    let loss = |y: &Tensor<f64>| y.data().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let base_pattern = format!("{:?}", cache.branch_pattern());
    let mut pgrads: Vec<Tensor<f64>> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    let refs: Vec<&Tensor<f64>> = params.iter().collect();
    let g_in = layers::backward(
        layer,
        &refs,
        &cache,
        Tensor::new(y.shape().to_vec(), w.clone())?,
        true,
        &mut pgrads,
    )?
    .expect("input gradient requested");

    let mut res = KindResult::default();
    let eval = |params: &[Tensor<f64>], x: &Tensor<f64>| -> Result<(f64, bool)> {
        let (y, c, _) = run(params, x)?;
        Ok((loss(&y), format!("{:?}", c.branch_pattern()) == base_pattern))
    };

    for k in sample_indices(&mut rng, input.len(), opts.coords_per_kind) {
        let mut xp = input.clone();
        xp.data_mut()[k] += opts.eps;
        let mut xm = input.clone();
        xm.data_mut()[k] -= opts.eps;
        let ((lp, sp), (lm, sm)) = (eval(&params, &xp)?, eval(&params, &xm)?);
        if sp && sm {
            res.record(g_in.data()[k], lp, lm, opts.eps);
        } else {
            res.skipped += 1;
        }
    }
    for t in 0..params.len() {
        for k in sample_indices(&mut rng, params[t].len(), opts.coords_per_kind) {
            let orig = params[t].data()[k];
            params[t].data_mut()[k] = orig + opts.eps;
            let (lp, sp) = eval(&params, &input)?;
            params[t].data_mut()[k] = orig - opts.eps;
            let (lm, sm) = eval(&params, &input)?;
            params[t].data_mut()[k] = orig;
            if sp && sm {
                res.record(pgrads[t].data()[k], lp, lm, opts.eps);
            } else {
                res.skipped += 1;
            }
        }
    }
    Ok(res)
}

/// Checks the gradient of the mean squared error with respect to the prediction.
pub fn loss_gradient_check(len: usize, opts: &GradCheckOptions) -> Result<KindResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pred = Tensor::new(vec![opts.batch, len], randn(&mut rng, opts.batch * len))?;
    let target = Tensor::new(vec![opts.batch, len], randn(&mut rng, opts.batch * len))?;
    let (_, g) = mse_loss(&pred, &target)?;
    let mut res = KindResult::default();
    for k in sample_indices(&mut rng, pred.len(), opts.coords_per_kind) {
        let mut p = pred.clone();
        p.data_mut()[k] += opts.eps;
        let lp = mse_loss(&p, &target)?.0;
        p.data_mut()[k] -= 2.0 * opts.eps;
        let lm = mse_loss(&p, &target)?.0;
        res.record(g.data()[k], lp, lm, opts.eps);
    }
    Ok(res)
}

/// Every layer kind of both networks checked in isolation, plus the loss.
pub fn layer_suite(opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let conv = |cin, cout, k| Layer::Conv2d {
        in_channels: cin,
        out_channels: cout,
        kernel: k,
        padding: k / 2,
    };
    let cases: Vec<(&str, Layer, Vec<usize>)> = vec![
        ("linear", Layer::Linear { inputs: 91, outputs: 128 }, vec![91]),
        ("conv", conv(3, 4, 7), vec![3, 14, 14]),
        ("conv1x1", conv(8, 1, 1), vec![8, 14, 14]),
        ("batchnorm", Layer::BatchNorm2d { channels: 4 }, vec![4, 7, 7]),
        ("relu", Layer::Relu, vec![3, 7, 7]),
        ("maxpool", Layer::MaxPool2x2, vec![3, 7, 7]),
        ("upsample", Layer::Upsample2x { crop: 7 }, vec![3, 4, 4]),
        ("dropout", Layer::Dropout { rate: 0.5 }, vec![3, 7, 7]),
        ("dropout_off", Layer::Dropout { rate: 0.0 }, vec![3, 7, 7]),
        ("symmetrize", Layer::Symmetrize, vec![2, 14, 14]),
    ];
    let mut report = GradCheckReport::default();
    for (name, layer, shape) in cases {
        report.add(name, &layer_gradient_check(&layer, &shape, opts)?);
    }
    report.add("mse_loss", &loss_gradient_check(91, opts)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_below_resolution_are_not_scored() {
        let mut r = KindResult::default();
        r.record(3e-18, 0.84 + 2.2e-16, 0.84, 1e-5);
        assert_eq!((r.unresolved, r.checked, r.max_rel_error), (1, 0, 0.0));
        r.record(1e-6, 0.84 + 2.2e-16, 0.84, 1e-5);
        assert_eq!(r.checked, 1);
        assert!(r.max_rel_error > 0.9);
    }

    #[test]
    fn single_linear_relu_layer() {
        let opts = GradCheckOptions::default();
        let fc = layer_gradient_check(&Layer::Linear { inputs: 91, outputs: 128 }, &[91], &opts).unwrap();
        let relu = layer_gradient_check(&Layer::Relu, &[128], &opts).unwrap();
        assert!(fc.max_rel_error < 1e-5, "{fc:?}");
        assert!(relu.max_rel_error < 1e-5, "{relu:?}");
        assert!(fc.checked >= 200);
    }

    #[test]
    fn fconn_stack() {
        let r = gradient_check(ModelConfig::fconn(), &GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error() < 1e-5, "{r:?}");
        let lin = &r.kinds["linear"];
        assert!(lin.checked >= 100 && lin.checked + lin.skipped + lin.unresolved == 200, "{lin:?}");
    }

    #[test]
    fn small_fconv_stack() {
        let cfg = ModelConfig {
            n_joints: 6,
            ..ModelConfig::fconv()
        };
        let opts = GradCheckOptions {
            coords_per_kind: 40,
            ..Default::default()
        };
        let r = gradient_check(cfg, &opts).unwrap();
        assert!(r.max_rel_error() < 1e-5, "{r:?}");
        for kind in ["conv", "conv1x1", "batchnorm", "input"] {
            assert!(r.kinds[kind].checked > 0, "{kind}");
        }
    }

    #[test]
    fn every_layer_kind_in_isolation() {
        let r = layer_suite(&GradCheckOptions::default()).unwrap();
        for (k, v) in &r.kinds {
            assert!(v.max_rel_error < 1e-5, "{k}: {v:?}");
            assert!(v.checked > 0, "{k}");
        }
    }
}
