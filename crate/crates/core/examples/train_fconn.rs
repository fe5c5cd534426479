//! Training the fully connected regressor, saving it and lifting held-out poses.
//!
//! cargo run --release --example train_fconn -- [EPOCHS]

use edm_pose::data::{synth_dataset, Split, SynthConfig};
use edm_pose::eval::ProtocolSpec;
use edm_pose::nn::{train_with_progress, Checkpoint, ModelConfig, TrainConfig};
use edm_pose::pipeline::{evaluate_predictions, select_split, training_samples, Lifter};
use edm_pose::{Result, Skeleton};

fn main() -> Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let records = synth_dataset(&SynthConfig::new(2200, 1))?;
    let samples = training_samples(select_split(&records, Some(Split::Train)))?;

    // Dropout off: at this data size the default rate keeps the fit near the mean pose.
    let tcfg = TrainConfig::new(epochs, 32, 7);
    let outcome = train_with_progress(ModelConfig::fconn().with_dropout(0.0), &tcfg, &samples, |e, loss| {
        if (e + 1) % 25 == 0 {
            println!("epoch {:>4}: loss {loss:.5}", e + 1);
        }
    })?;

    let path = std::env::temp_dir().join("fconn.ckpt");
    outcome.checkpoint.save(&path)?;
    let lifter = Lifter::new(&Checkpoint::load(&path)?, Skeleton::default_14())?;

    let test = select_split(&records, Some(Split::Test));
    let lifted = lifter.lift(&test[0].observation()?)?;
    println!("{} lifted with chirality {:?}", test[0].id, lifted.chirality);

    let preds = lifter.predict_records(&test, &ProtocolSpec::clean())?;
    let report = evaluate_predictions(&preds, &records, "clean", &lifter.skeleton)?;
    println!(
        "test MPJPE {:.1} mm over {} poses (mean-pose baseline {:.1} mm)",
        report.mpjpe,
        report.n_samples,
        report.baseline_mpjpe.unwrap_or(f64::NAN)
    );
    Ok(())
}
