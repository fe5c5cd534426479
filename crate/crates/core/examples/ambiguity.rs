//! How well 2D pose distances predict 3D pose distances, for Cartesian and
//! distance-matrix representations.
//!
//! cargo run --release --example ambiguity -- [PAIRS] [CSV_OUT]

use edm_pose::data::{synth_dataset, SynthConfig};
use edm_pose::eval::ambiguity_correlation;
use edm_pose::pose::normalize_2d;
use edm_pose::{Pose2D, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let pairs = args.next().and_then(|a| a.parse().ok()).unwrap_or(5000);
    let records = synth_dataset(&SynthConfig::new(1000, 9))?;
    let poses = records
        .iter()
        .map(|r| Ok((normalize_2d(&Pose2D::raw(r.joints2d.clone())?)?, r.pose3d())))
        .collect::<Result<Vec<_>>>()?;
    let report = ambiguity_correlation(&poses, pairs, &mut ChaCha8Rng::seed_from_u64(1))?;
    println!("{} pairs", report.n_pairs);
    println!("  pearson, cartesian: {:.3}", report.pearson_cartesian);
    println!("  pearson, EDM:       {:.3}", report.pearson_edm);
    if let Some(path) = args.next() {
        std::fs::write(&path, report.scatter_csv())?;
        println!("scatter written to {path}");
    }
    Ok(())
}
