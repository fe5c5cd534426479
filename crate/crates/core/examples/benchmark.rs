//! End-to-end synthetic benchmark: train one architecture on generated poses
//! and compare its test error with the mean-pose baseline.
//!
//! cargo run --release --example benchmark -- [fconn|fconv] [N_TRAIN] [EPOCHS] [BATCH] [DROPOUT] [LR]

use std::time::Instant;

use edm_pose::data::{synth_dataset, Split, SynthConfig};
use edm_pose::eval::ProtocolSpec;
use edm_pose::nn::{train_with_progress, Arch, ModelConfig, TrainConfig};
use edm_pose::pipeline::{evaluate_predictions, select_split, training_samples, Lifter};
use edm_pose::{Result, Skeleton};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let arch: Arch = args.next().as_deref().unwrap_or("fconn").parse()?;
    let mut num = |d: usize| args.next().and_then(|a| a.parse().ok()).unwrap_or(d);
    let (n_train, epochs, batch) = (num(5000), num(500), num(200));
    let mut real = |d: f64| args.next().and_then(|a| a.parse().ok()).unwrap_or(d);
    let (dropout, lr) = (real(0.5), real(1e-3));
    let mut tcfg = TrainConfig::new(epochs, batch, 61);
    tcfg.lr_initial = lr;
    tcfg.lr_reduced = lr / 10.0;
    let n = n_train + 500;
    let records = synth_dataset(&SynthConfig { test_fraction: 500.0 / n as f64, ..SynthConfig::new(n, 6) })?;
    let samples = training_samples(select_split(&records, Some(Split::Train)))?;

    let start = Instant::now();
    let log_every = (epochs / 10).max(1);
    let ckpt = train_with_progress(ModelConfig::new(arch).with_dropout(dropout), &tcfg, &samples, |e, loss| {
        if (e + 1) % log_every == 0 {
            println!("epoch {:>5}: loss {loss:.5} ({:.0?})", e + 1, start.elapsed());
        }
    })?
    .checkpoint;

    let lifter = Lifter::new(&ckpt, Skeleton::default_14())?;
    let test = select_split(&records, Some(Split::Test));
    let report = evaluate_predictions(&lifter.predict_records(&test, &ProtocolSpec::clean())?, &records, "clean", &lifter.skeleton)?;
    let base = report.baseline_mpjpe.unwrap_or(f64::NAN);
    println!(
        "{arch}: test MPJPE {:.1} mm, mean-pose baseline {base:.1} mm, ratio {:.3}, {:.0?}",
        report.mpjpe,
        report.mpjpe / base,
        start.elapsed()
    );
    Ok(())
}
