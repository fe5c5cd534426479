//! Occlusion-augmented training and per-protocol errors on hidden and visible
//! joints.
//!
//! cargo run --release --example occlusion -- [fconn|fconv] [EPOCHS]

use edm_pose::data::{synth_dataset, Split, SynthConfig};
use edm_pose::eval::{MaskKind, ProtocolSpec};
use edm_pose::nn::{train, Arch, ModelConfig, TrainConfig};
use edm_pose::pipeline::{evaluate_predictions, select_split, training_samples, Lifter};
use edm_pose::{Result, Skeleton};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let arch: Arch = args.next().as_deref().unwrap_or("fconn").parse()?;
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(100);
    let records = synth_dataset(&SynthConfig { test_fraction: 0.2, ..SynthConfig::new(1500, 8) })?;
    let samples = training_samples(select_split(&records, Some(Split::Train)))?;

    let mut tcfg = TrainConfig::new(epochs, 32, 8);
    tcfg.occlusion_augment = true;
    // The convolutional network only trains at the lower rate.
    if arch == Arch::Fconv {
        tcfg.lr_initial = 1e-4;
        tcfg.lr_reduced = 1e-5;
    }
    let ckpt = train(ModelConfig::new(arch).with_dropout(0.0), &tcfg, &samples)?.checkpoint;
    let lifter = Lifter::new(&ckpt, Skeleton::default_14())?;
    let test = select_split(&records, Some(Split::Test));

    for kind in MaskKind::ALL {
        let protocol = ProtocolSpec::occlusion(kind, 3);
        let preds = lifter.predict_records(&test, &protocol)?;
        let r = evaluate_predictions(&preds, &records, &protocol.to_string(), &lifter.skeleton)?;
        println!(
            "{:<22} hidden {:>6.1} mm   visible {:>6.1} mm",
            protocol.to_string(),
            r.occluded_mpjpe.unwrap_or(f64::NAN),
            r.visible_mpjpe.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
