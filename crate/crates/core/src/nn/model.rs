//! The two EDM regressors and their parameter store.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{self, BnStats, Cache, Layer, Mode};
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::edm::{self, DistanceMatrix, Units};
use crate::error::{Error, Result};

/// Momentum of the batch-norm running averages.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// Three fully connected layers on the packed upper triangle.
    Fconn,
    /// Contractive/expansive convolutional network on the full matrix.
    Fconv,
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fconn" => Ok(Arch::Fconn),
            "fconv" => Ok(Arch::Fconv),
            other => Err(Error::InvalidArgument(format!("unknown architecture `{other}`"))),
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arch::Fconn => "fconn",
            Arch::Fconv => "fconv",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub n_joints: usize,
    pub dropout_rate: f64,
}

pub const HIDDEN: usize = 128;
pub const FEATURES: usize = 64;
pub const KERNEL: usize = 7;

impl ModelConfig {
    pub fn new(arch: Arch) -> Self {
        Self {
            arch,
            n_joints: crate::N_JOINTS,
            dropout_rate: 0.5,
        }
    }

    pub fn fconn() -> Self {
        Self::new(Arch::Fconn)
    }

    pub fn fconv() -> Self {
        Self::new(Arch::Fconv)
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_joints < 2 {
            return Err(Error::InvalidArgument("n_joints must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Per-sample input shape (without batch dimension).
    pub fn input_shape(&self) -> Vec<usize> {
        match self.arch {
            Arch::Fconn => vec![edm::packed_len(self.n_joints)],
            Arch::Fconv => vec![1, self.n_joints, self.n_joints],
        }
    }

    /// Named layer stack.
    pub fn layers(&self) -> Vec<(String, Layer)> {
        let n = self.n_joints;
        let drop = Layer::Dropout {
            rate: self.dropout_rate,
        };
        let named = |v: Vec<(&str, Layer)>| {
            v.into_iter()
                .map(|(s, l)| (s.to_string(), l))
                .collect::<Vec<_>>()
        };
        match self.arch {
            Arch::Fconn => {
                let pairs = edm::packed_len(n);
                named(vec![
                    ("fc1", Layer::Linear { inputs: pairs, outputs: HIDDEN }),
                    ("relu1", Layer::Relu),
                    ("drop1", drop.clone()),
                    ("fc2", Layer::Linear { inputs: HIDDEN, outputs: HIDDEN }),
                    ("relu2", Layer::Relu),
                    ("drop2", drop),
                    ("fc3", Layer::Linear { inputs: HIDDEN, outputs: pairs }),
                    ("relu3", Layer::Relu),
                ])
            }
            Arch::Fconv => {
                let half = n.div_ceil(2);
                let conv = |cin| Layer::Conv2d {
                    in_channels: cin,
                    out_channels: FEATURES,
                    kernel: KERNEL,
                    padding: KERNEL / 2,
                };
                named(vec![
                    ("conv1", conv(1)),
                    ("bn1", Layer::BatchNorm2d { channels: FEATURES }),
                    ("relu1", Layer::Relu),
                    ("pool1", Layer::MaxPool2x2),
                    ("drop1", drop.clone()),
                    ("conv2", conv(FEATURES)),
                    ("bn2", Layer::BatchNorm2d { channels: FEATURES }),
                    ("relu2", Layer::Relu),
                    ("pool2", Layer::MaxPool2x2),
                    ("drop2", drop.clone()),
                    ("up3", Layer::Upsample2x { crop: half }),
                    ("deconv3", conv(FEATURES)),
                    ("relu3", Layer::Relu),
                    ("drop3", drop),
                    ("up4", Layer::Upsample2x { crop: n }),
                    ("deconv4", conv(FEATURES)),
                    ("relu4", Layer::Relu),
                    (
                        "contract",
                        Layer::Conv2d {
                            in_channels: FEATURES,
                            out_channels: 1,
                            kernel: 1,
                            padding: 0,
                        },
                    ),
                    ("sym", Layer::Symmetrize),
                    ("relu_out", Layer::Relu),
                ])
            }
        }
    }

    /// Encodes an input EDM into one network input item.
    pub fn encode_input(&self, edm: &DistanceMatrix) -> Result<Vec<f64>> {
        if edm.n() != self.n_joints {
            return Err(Error::Shape(format!(
                "model expects {} joints, matrix has {}",
                self.n_joints,
                edm.n()
            )));
        }
        Ok(match self.arch {
            Arch::Fconn => edm::pack_upper(edm),
            Arch::Fconv => edm.values().to_vec(),
        })
    }

    /// Decodes one output item into a distance matrix, multiplying by `scale`.
    pub fn decode_output(&self, item: &[f64], scale: f64, units: Units) -> Result<DistanceMatrix> {
        let scaled: Vec<f64> = item.iter().map(|v| v * scale).collect();
        match self.arch {
            Arch::Fconn => edm::unpack_upper(&scaled, self.n_joints, units),
            Arch::Fconv => DistanceMatrix::from_raw_prediction(self.n_joints, &scaled, units),
        }
    }
}

/// Number of trainable parameters (batch-norm running statistics excluded).
pub fn count_params(config: &ModelConfig) -> usize {
    config
        .layers()
        .iter()
        .flat_map(|(_, l)| l.param_specs())
        .filter(|s| s.trainable)
        .map(|s| s.shape.iter().product::<usize>())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub trainable: bool,
}

/// Named tensors of a model in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.tensor)
    }

    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.len())
            .sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    tensor: e.tensor.cast(),
                    trainable: e.trainable,
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Vec<Tensor<T>> {
        self.entries
            .iter()
            .map(|e| Tensor::zeros(e.tensor.shape()))
            .collect()
    }
}

/// He-normal weights, zero biases, unit batch-norm scale; deterministic per seed.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> ModelParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for (name, layer) in config.layers() {
        for spec in layer.param_specs() {
            let len: usize = spec.shape.iter().product();
            let data: Vec<f64> = match spec.fan_in {
                Some(fan_in) => {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                        .expect("positive standard deviation");
                    (0..len).map(|_| normal.sample(&mut rng)).collect()
                }
                None => vec![spec.init_value; len],
            };
            entries.push(ParamEntry {
                name: format!("{name}.{}", spec.suffix),
                tensor: Tensor::from_f64(&spec.shape, &data).expect("shape from spec"),
                trainable: spec.trainable,
            });
        }
    }
    ModelParams { entries }
}

#[derive(Debug, Clone)]
struct Slot {
    name: String,
    layer: Layer,
    params: Range<usize>,
}

/// A configured network with its parameters.
#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    slots: Vec<Slot>,
    params: ModelParams<T>,
}

/// Result of a forward pass, holding what the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub output: Tensor<T>,
    caches: Vec<Cache<T>>,
    bn_stats: Vec<Option<BnStats>>,
}

impl<T> ForwardPass<T> {
    /// Whether two passes took the same ReLU/max-pool branches everywhere.
    pub fn same_branches(&self, other: &Self) -> bool {
        self.caches
            .iter()
            .zip(&other.caches)
            .all(|(a, b)| a.branch_pattern() == b.branch_pattern())
    }
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    /// One tensor per parameter entry; buffers get zeros.
    pub params: Vec<Tensor<T>>,
    pub input: Option<Tensor<T>>,
}

impl<T: Scalar> Model<T> {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Self::from_params(config, init_params(&config, seed))
    }

    pub fn from_params(config: ModelConfig, params: ModelParams<T>) -> Result<Self> {
        config.validate()?;
        let mut slots = Vec::new();
        let mut next = 0;
        let mut shape = config.input_shape();
        for (name, layer) in config.layers() {
            shape = layer.output_shape(&shape)?;
            let specs = layer.param_specs();
            for spec in &specs {
                let want = format!("{name}.{}", spec.suffix);
                let entry = params.entries.get(next).ok_or_else(|| {
                    Error::Shape(format!("missing parameter `{want}`"))
                })?;
                if entry.name != want || entry.tensor.shape() != spec.shape.as_slice() {
                    return Err(Error::Shape(format!(
                        "parameter {next}: expected `{want}` {:?}, found `{}` {:?}",
                        spec.shape,
                        entry.name,
                        entry.tensor.shape()
                    )));
                }
                next += 1;
            }
            slots.push(Slot {
                name,
                layer,
                params: next - specs.len()..next,
            });
        }
        if next != params.entries.len() {
            return Err(Error::Shape(format!(
                "{} unexpected trailing parameters",
                params.entries.len() - next
            )));
        }
        Ok(Self {
            config,
            slots,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams<T> {
        self.params
    }

    pub fn layer_names(&self) -> impl Iterator<Item = (&str, &Layer)> {
        self.slots.iter().map(|s| (s.name.as_str(), &s.layer))
    }

    /// Index range into `params().entries` owned by each layer.
    pub(crate) fn layer_param_ranges(&self) -> impl Iterator<Item = (&Layer, Range<usize>)> {
        self.slots.iter().map(|s| (&s.layer, s.params.clone()))
    }

    fn slot_params(&self, slot: &Slot) -> Vec<&Tensor<T>> {
        self.params.entries[slot.params.clone()]
            .iter()
            .map(|e| &e.tensor)
            .collect()
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &Tensor<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardPass<T>> {
        let expected = self.config.input_shape();
        if input.shape().len() != expected.len() + 1 || input.shape()[1..] != expected[..] {
            return Err(Error::Shape(format!(
                "{} input must be [batch, {expected:?}], got {:?}",
                self.config.arch,
                input.shape()
            )));
        }
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.slots.len());
        let mut bn_stats = Vec::with_capacity(self.slots.len());
        for slot in &self.slots {
            let (y, cache, stats) =
                layers::forward(&slot.layer, &self.slot_params(slot), x, mode, rng)?;
            if !y.all_finite() {
                return Err(Error::numeric(
                    format!("layer `{}`", slot.name),
                    "non-finite activation",
                ));
            }
            caches.push(cache);
            bn_stats.push(stats);
            x = y;
        }
        Ok(ForwardPass {
            output: x,
            caches,
            bn_stats,
        })
    }

    /// Deterministic inference (dropout off, batch-norm running statistics).
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(input, Mode::Infer, &mut unused)?.output)
    }

    pub fn backward(
        &self,
        pass: &ForwardPass<T>,
        grad_output: Tensor<T>,
        want_input_grad: bool,
    ) -> Result<Gradients<T>> {
        if grad_output.shape() != pass.output.shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                grad_output.shape(),
                pass.output.shape()
            )));
        }
        let mut grads = self.params.zeros_like();
        let mut g = grad_output;
        for (i, slot) in self.slots.iter().enumerate().rev() {
            let need = i > 0 || want_input_grad;
            let next = layers::backward(
                &slot.layer,
                &self.slot_params(slot),
                &pass.caches[i],
                g,
                need,
                &mut grads[slot.params.clone()],
            )?;
            match next {
                Some(t) => g = t,
                None => {
                    return Ok(Gradients {
                        params: grads,
                        input: None,
                    })
                }
            }
        }
        Ok(Gradients {
            params: grads,
            input: Some(g),
        })
    }

    /// Folds the batch statistics of a train-mode pass into the running averages.
    pub fn update_running_stats(&mut self, pass: &ForwardPass<T>) {
        for (slot, stats) in self.slots.iter().zip(&pass.bn_stats) {
            let Some(stats) = stats else { continue };
            let r = slot.params.clone();
            let (mean_idx, var_idx) = (r.start + 2, r.start + 3);
            for (k, (&m, &v)) in stats.mean.iter().zip(&stats.var_unbiased).enumerate() {
                let rm = &mut self.params.entries[mean_idx].tensor.data_mut()[k];
                *rm = T::from_f64((1.0 - BN_MOMENTUM) * rm.to_f64() + BN_MOMENTUM * m);
                let rv = &mut self.params.entries[var_idx].tensor.data_mut()[k];
                *rv = T::from_f64((1.0 - BN_MOMENTUM) * rv.to_f64() + BN_MOMENTUM * v);
            }
        }
    }

    /// Stacks EDMs into one input batch.
    pub fn batch_input(&self, edms: &[&DistanceMatrix]) -> Result<Tensor<T>> {
        let mut data = Vec::with_capacity(edms.len() * self.config.input_shape().iter().product::<usize>());
        for e in edms {
            data.extend(self.config.encode_input(e)?);
        }
        let mut shape = vec![edms.len()];
        shape.extend(self.config.input_shape());
        Tensor::from_f64(&shape, &data)
    }
}

/// Mean squared error over every element and its gradient with respect to `pred`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    let scale = T::from_f64(2.0 / n);
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let diff = p - t;
        loss += diff.to_f64() * diff.to_f64();
        *g = diff * scale;
    }
    Ok((loss / n, grad))
}
