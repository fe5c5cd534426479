//! Error under increasing 2D detector noise, written as JSON and SVG.
//!
//! cargo run --release --example noise_sweep -- [OUT_DIR]

use edm_pose::data::{synth_dataset, Split, SynthConfig};
use edm_pose::eval::ProtocolSpec;
use edm_pose::nn::{train, ModelConfig, TrainConfig};
use edm_pose::pipeline::{evaluate_predictions, select_split, training_samples, Lifter};
use edm_pose::plot::metrics_svg;
use edm_pose::{Result, Skeleton};

fn main() -> Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(std::env::temp_dir);
    let records = synth_dataset(&SynthConfig { test_fraction: 0.25, ..SynthConfig::new(2000, 5) })?;
    let samples = training_samples(select_split(&records, Some(Split::Train)))?;
    let ckpt = train(ModelConfig::fconn().with_dropout(0.0), &TrainConfig::new(100, 32, 5), &samples)?.checkpoint;
    let lifter = Lifter::new(&ckpt, Skeleton::default_14())?;
    let test = select_split(&records, Some(Split::Test));

    let mut reports = Vec::new();
    for sigma in [0.0, 5.0, 10.0, 15.0, 20.0] {
        let protocol = ProtocolSpec::noise(sigma, 1);
        let preds = lifter.predict_records(&test, &protocol)?;
        let r = evaluate_predictions(&preds, &records, &protocol.to_string(), &lifter.skeleton)?;
        println!("sigma {sigma:>4} px: MPJPE {:.1} mm", r.mpjpe);
        reports.push(r);
    }
    std::fs::write(out.join("noise_sweep.json"), serde_json::to_string_pretty(&reports)?)?;
    std::fs::write(out.join("noise_sweep.svg"), metrics_svg(&reports)?)?;
    println!("wrote {}", out.join("noise_sweep.svg").display());
    Ok(())
}
