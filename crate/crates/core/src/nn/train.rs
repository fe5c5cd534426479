//! Mini-batch training with Adam, the two-stage learning-rate schedule and the
//! occlusion/noise augmentation protocols.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::checkpoint::Checkpoint;
use super::layers::Mode;
use super::model::{mse_loss, Model, ModelConfig};
use super::tensor::Tensor;
use crate::edm::{apply_occlusion, observation_edm, DistanceMatrix, Units};
use crate::error::{Error, Result};
use crate::eval::protocol::inject_noise;
use crate::pose::ObservedPose2D;

/// Millimeters per network output unit: targets are regressed in meters.
pub const DEFAULT_TARGET_SCALE: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_reduced: f64,
    /// First epoch (0-based) trained with `lr_reduced`.
    pub lr_switch_epoch: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Hide two random joints of every input, drawn afresh each epoch.
    pub occlusion_augment: bool,
    /// Pixel noise added to the raw 2D joints each epoch (needs raw observations).
    pub noise_sigma: f64,
    /// Target EDMs are divided by this before regression.
    pub target_scale: f64,
}

impl TrainConfig {
    /// Defaults: lr 1e-3 dropping to 1e-4 half-way, default Adam moments.
    pub fn new(epochs: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            batch_size,
            epochs,
            lr_initial: 1e-3,
            lr_reduced: 1e-4,
            lr_switch_epoch: epochs / 2,
            adam: AdamConfig::default(),
            seed,
            occlusion_augment: false,
            noise_sigma: 0.0,
            target_scale: DEFAULT_TARGET_SCALE,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.lr_switch_epoch {
            self.lr_initial
        } else {
            self.lr_reduced
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if self.lr_switch_epoch >= self.epochs {
            return Err(Error::InvalidArgument(format!(
                "lr switch epoch {} must precede the final epoch {}",
                self.lr_switch_epoch, self.epochs
            )));
        }
        if !(self.noise_sigma >= 0.0) || !(self.target_scale > 0.0) {
            return Err(Error::InvalidArgument("noise sigma and target scale must be valid".into()));
        }
        Ok(())
    }
}

/// One `(input, target)` pair. `observation` carries the raw 2D pose from which
/// `input` was built, needed only for noise augmentation.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub input: DistanceMatrix,
    pub target: DistanceMatrix,
    pub observation: Option<ObservedPose2D>,
}

impl TrainingSample {
    pub fn from_observation(obs: ObservedPose2D, target: DistanceMatrix) -> Result<Self> {
        Ok(Self {
            input: observation_edm(&obs)?,
            target,
            observation: Some(obs),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Mean train-mode loss of each epoch.
    pub history: Vec<f64>,
}

pub fn train(config: ModelConfig, tcfg: &TrainConfig, data: &[TrainingSample]) -> Result<TrainOutcome> {
    train_with_progress(config, tcfg, data, |_, _| {})
}

/// Like [`train`], calling `on_epoch(epoch, mean_loss)` after every epoch.
pub fn train_with_progress(
    config: ModelConfig,
    tcfg: &TrainConfig,
    data: &[TrainingSample],
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (i, s) in data.iter().enumerate() {
        if s.input.n() != config.n_joints || s.target.n() != config.n_joints {
            return Err(Error::Shape(format!(
                "sample {i}: matrices of size {}/{} for a {}-joint model",
                s.input.n(),
                s.target.n(),
                config.n_joints
            )));
        }
        if tcfg.noise_sigma > 0.0 && s.observation.is_none() {
            return Err(Error::InvalidArgument(format!(
                "sample {i}: noise augmentation needs the raw 2D observation"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut model = Model::<f32>::init(config, rng.random())?;
    init_output_bias(&mut model, tcfg, data)?;
    let mut adam = AdamState::new(model.params());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(tcfg.epochs);

    for epoch in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        let lr = tcfg.lr_at(epoch);
        let mut total = 0.0;
        for chunk in order.chunks(tcfg.batch_size) {
            let (input, target) = prepare_batch(&model, tcfg, data, chunk, &mut rng)?;
            let pass = model.forward(&input, Mode::Train, &mut rng)?;
            let (loss, grad) = mse_loss(&pass.output, &target)?;
            if !loss.is_finite() {
                return Err(Error::numeric(format!("epoch {epoch}"), "non-finite loss"));
            }
            let grads = model.backward(&pass, grad, false)?;
            model.update_running_stats(&pass);
            adam_step(&mut adam, model.params_mut(), &grads.params, lr, &tcfg.adam)?;
            total += loss * chunk.len() as f64;
        }
        let mean = total / data.len() as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(config, model.into_params(), tcfg.target_scale),
        history,
    })
}

/// Starts the output layer at the mean training target. With zero biases many
/// units of the final ReLU begin negative for every input and never recover.
fn init_output_bias(model: &mut Model<f32>, tcfg: &TrainConfig, data: &[TrainingSample]) -> Result<()> {
    let targets: Vec<DistanceMatrix> =
        data.iter().map(|s| s.target.scaled(1.0 / tcfg.target_scale, Units::Millimeters)).collect();
    let batch = model.batch_input(&targets.iter().collect::<Vec<_>>())?;
    let item = batch.len() / data.len();
    let mut mean = vec![0.0f64; item];
    for chunk in batch.data().chunks(item) {
        for (m, &v) in mean.iter_mut().zip(chunk) {
            *m += f64::from(v) / data.len() as f64;
        }
    }
    let Some(bias) = model.params_mut().entries.iter_mut().rev().find(|e| e.name.ends_with(".bias")) else {
        return Ok(());
    };
    let values = bias.tensor.data_mut();
    if values.len() == item {
        for (b, m) in values.iter_mut().zip(&mean) {
            *b = *m as f32;
        }
    } else {
        let overall = mean.iter().sum::<f64>() / item as f64;
        values.iter_mut().for_each(|b| *b = overall as f32);
    }
    Ok(())
}

/// Input EDM seen by the network for one sample in one epoch.
pub(crate) fn augmented_input<R: Rng + ?Sized>(
    sample: &TrainingSample,
    tcfg: &TrainConfig,
    rng: &mut R,
) -> Result<DistanceMatrix> {
    let mut input = match (&sample.observation, tcfg.noise_sigma > 0.0) {
        (Some(obs), true) => {
            let noisy = inject_noise(&obs.pose, Some(&obs.visibility), tcfg.noise_sigma, rng)?;
            observation_edm(&ObservedPose2D::new(noisy, obs.visibility.clone())?)?
        }
        _ => sample.input.clone(),
    };
    if tcfg.occlusion_augment {
        input = occlude_two_random(&input, rng)?;
    }
    Ok(input)
}

/// Hides two distinct joints chosen uniformly at random.
pub fn occlude_two_random<R: Rng + ?Sized>(edm: &DistanceMatrix, rng: &mut R) -> Result<DistanceMatrix> {
    let mut vis = vec![true; edm.n()];
    for j in index::sample(rng, edm.n(), 2) {
        vis[j] = false;
    }
    apply_occlusion(edm, &vis)
}

fn prepare_batch<R: Rng + ?Sized>(
    model: &Model<f32>,
    tcfg: &TrainConfig,
    data: &[TrainingSample],
    chunk: &[usize],
    rng: &mut R,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let inputs = chunk
        .iter()
        .map(|&i| augmented_input(&data[i], tcfg, rng))
        .collect::<Result<Vec<_>>>()?;
    let input = model.batch_input(&inputs.iter().collect::<Vec<_>>())?;
    let targets: Vec<DistanceMatrix> = chunk
        .iter()
        .map(|&i| data[i].target.scaled(1.0 / tcfg.target_scale, Units::Millimeters))
        .collect();
    let target = model.batch_input(&targets.iter().collect::<Vec<_>>())?;
    Ok((input, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edm::build_edm;

    fn toy_data(n: usize, seed: u64) -> Vec<TrainingSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let pts3: Vec<[f64; 3]> = (0..14)
                    .map(|_| [rng.random_range(-500.0..500.0), rng.random_range(-900.0..900.0), rng.random_range(-300.0..300.0)])
                    .collect();
                let pts2: Vec<[f64; 2]> = pts3.iter().map(|p| [p[0] * 0.2 + 500.0, p[1] * 0.2 + 400.0]).collect();
                let obs = ObservedPose2D::fully_visible(crate::pose::Pose2D::raw(pts2).unwrap()).unwrap();
                TrainingSample::from_observation(obs, build_edm(&pts3, Units::Millimeters).unwrap()).unwrap()
            })
            .collect()
    }

    #[test]
    fn learning_rate_schedule() {
        let t = TrainConfig::new(500, 7, 0);
        assert_eq!(t.lr_switch_epoch, 250);
        assert_eq!(t.lr_at(0), 0.001);
        assert_eq!(t.lr_at(249), 0.001);
        assert_eq!(t.lr_at(250), 0.0001);
        assert_eq!(t.lr_at(499), 0.0001);
        let mut bad = t.clone();
        bad.lr_switch_epoch = 500;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn occlusion_augmentation_hides_exactly_two_joints() {
        let data = toy_data(20, 1);
        let mut tcfg = TrainConfig::new(2, 4, 0);
        tcfg.occlusion_augment = true;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for s in &data {
            for _ in 0..10 {
                let x = augmented_input(s, &tcfg, &mut rng).unwrap();
                let empty = (0..14).filter(|&m| x.row(m).iter().all(|&v| v == 0.0)).count();
                assert_eq!(empty, 2);
            }
        }
        tcfg.occlusion_augment = false;
        let x = augmented_input(&data[0], &tcfg, &mut rng).unwrap();
        assert_eq!(x, data[0].input);
    }

    #[test]
    fn rejects_empty_and_inconsistent_data() {
        let tcfg = TrainConfig::new(2, 4, 0);
        assert!(matches!(train(ModelConfig::fconn(), &tcfg, &[]), Err(Error::EmptyDataset)));
        let mut data = toy_data(2, 2);
        data[1].target = DistanceMatrix::zeros(5, Units::Millimeters);
        assert!(matches!(train(ModelConfig::fconn(), &tcfg, &data), Err(Error::Shape(_))));
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = toy_data(12, 3);
        let mut tcfg = TrainConfig::new(4, 5, 11);
        tcfg.occlusion_augment = true;
        tcfg.noise_sigma = 2.0;
        let a = train(ModelConfig::fconn(), &tcfg, &data).unwrap();
        let b = train(ModelConfig::fconn(), &tcfg, &data).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    }

    #[test]
    fn small_dataset_is_overfit() {
        let recs = crate::data::synth_dataset(&crate::data::SynthConfig::new(10, 4)).unwrap();
        let data = crate::pipeline::training_samples(&recs).unwrap();
        let tcfg = TrainConfig::new(2000, 10, 5);
        let out = train(ModelConfig::fconn(), &tcfg, &data).unwrap();
        let first = out.history[0];
        let last = *out.history.last().unwrap();
        assert!(last < 0.01 * first, "first {first}, last {last}");
    }
}
