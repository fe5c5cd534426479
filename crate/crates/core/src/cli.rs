//! The `edmpose` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{read_dataset, read_predictions, synth_dataset, write_jsonl, Split, SynthConfig};
use crate::error::{Error, Result};
use crate::eval::{ambiguity_correlation, ProtocolSpec};
use crate::nn::{train_with_progress, Arch, Checkpoint, ModelConfig, TrainConfig};
use crate::pipeline::{evaluate_predictions, select_split, training_samples, Lifter};
use crate::plot::{metrics_svg, parse_reports};
use crate::pose::{normalize_2d, Pose2D, Pose3D};
use crate::skeleton::Skeleton;

#[derive(Debug, Parser)]
#[command(name = "edmpose", version, about = "Lift 2D human poses to 3D through distance-matrix regression")]
pub struct Cli {
    /// Skeleton definition (JSON); the built-in 14-joint model by default.
    #[arg(long, global = true)]
    pub skeleton: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        noise_sigma: Option<f64>,
        /// Generator settings (JSON); `--n`, `--seed` and `--noise-sigma` take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a regressor on the training split.
    Train {
        #[arg(long)]
        arch: Arch,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: usize,
        #[arg(long)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_checkpoint: PathBuf,
        #[arg(long)]
        occlusion_augment: bool,
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        /// Initial learning rate; a tenth of it is used for the second half.
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// Dropout rate of the network.
        #[arg(long, default_value_t = 0.5)]
        dropout: f64,
        /// Print the loss every this many epochs (0 disables).
        #[arg(long, default_value_t = 10)]
        log_every: usize,
    },
    /// Predict 3D poses for a dataset split.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// clean, noise:SIGMA or occlusion:KIND.
        #[arg(long, default_value = "clean")]
        protocol: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// train, val, test or all.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Score predictions against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value = "clean")]
        protocol: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlate 2D and 3D pose distances for both representations.
    AnalyzeAmbiguity {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON summary; the scatter goes next to it with a `.csv` extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render metric reports as SVG.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    if s == "all" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

impl Cli {
    pub fn run(self) -> Result<()> {
        let skeleton = match &self.skeleton {
            Some(p) => Skeleton::load(p)?,
            None => Skeleton::default_14(),
        };
        let n_joints = skeleton.n_joints();
        match self.command {
            Command::Synth { n, seed, out, noise_sigma, config } => {
                let mut cfg = match config {
                    Some(p) => SynthConfig::from_json_str(&std::fs::read_to_string(p)?)?,
                    None => SynthConfig::default(),
                };
                cfg.n_samples = n;
                cfg.seed = seed;
                if let Some(s) = noise_sigma {
                    cfg.noise_sigma = s;
                }
                write_jsonl(out, &synth_dataset(&cfg)?)
            }
            Command::Train {
                arch,
                data,
                epochs,
                batch,
                seed,
                out_checkpoint,
                occlusion_augment,
                noise_sigma,
                lr,
                dropout,
                log_every,
            } => {
                let records = read_dataset(&data, n_joints)?;
                let train = select_split(&records, Some(Split::Train));
                if train.is_empty() {
                    return Err(Error::InvalidInput(format!("{} has no training records", data.display())));
                }
                let samples = training_samples(train)?;
                let mut tcfg = TrainConfig::new(epochs, batch, seed);
                tcfg.occlusion_augment = occlusion_augment;
                tcfg.noise_sigma = noise_sigma;
                tcfg.lr_initial = lr;
                tcfg.lr_reduced = lr / 10.0;
                let config = ModelConfig { n_joints, ..ModelConfig::new(arch) }.with_dropout(dropout);
                let outcome = train_with_progress(config, &tcfg, &samples, |e, loss| {
                    if log_every > 0 && ((e + 1) % log_every == 0 || e + 1 == epochs) {
                        eprintln!("epoch {:>5}  loss {loss:.6e}", e + 1);
                    }
                })?;
                outcome.checkpoint.save(out_checkpoint)
            }
            Command::Predict { checkpoint, data, out, protocol, seed, split } => {
                let protocol = protocol.parse::<ProtocolSpec>()?.with_seed(seed);
                let lifter = Lifter::new(&Checkpoint::load(checkpoint)?, skeleton)?;
                let records = read_dataset(&data, n_joints)?;
                let chosen = select_split(&records, parse_split(&split)?);
                if chosen.is_empty() {
                    return Err(Error::InvalidInput(format!("{} has no `{split}` records", data.display())));
                }
                write_jsonl(out, &lifter.predict_records(&chosen, &protocol)?)
            }
            Command::Evaluate { pred, gt, protocol, out } => {
                protocol.parse::<ProtocolSpec>()?;
                let preds = read_predictions(pred, n_joints)?;
                let gt = read_dataset(gt, n_joints)?;
                write_json(&out, &evaluate_predictions(&preds, &gt, &protocol, &skeleton)?)
            }
            Command::AnalyzeAmbiguity { data, pairs, seed, out } => {
                let records = read_dataset(&data, n_joints)?;
                let poses = records
                    .iter()
                    .map(|r| Ok((normalize_2d(&Pose2D::raw(r.joints2d.clone())?)?, Pose3D::new(r.joints3d.clone())?)))
                    .collect::<Result<Vec<_>>>()?;
                let report = ambiguity_correlation(&poses, pairs, &mut ChaCha8Rng::seed_from_u64(seed))?;
                write_json(&out, &report)?;
                std::fs::write(out.with_extension("csv"), report.scatter_csv())?;
                Ok(())
            }
            Command::Plot { metrics, out } => {
                let reports = parse_reports(&std::fs::read_to_string(metrics)?)?;
                std::fs::write(out, metrics_svg(&reports)?)?;
                Ok(())
            }
        }
    }
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.run() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
