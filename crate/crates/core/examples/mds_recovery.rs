//! Recovering 3D joints from a distance matrix and choosing between the two
//! mirror-image solutions.
//!
//! cargo run --example mds_recovery

use edm_pose::data::synth::{sample_pose, sample_rng};
use edm_pose::data::SynthConfig;
use edm_pose::eval::{mpjpe, procrustes_align, AlignOptions};
use edm_pose::mds::{anthropomorphism_score, recover_pose, RecoveryOptions};
use edm_pose::{build_edm, DistanceMatrix, Result, Skeleton, Units};
use rand::Rng;

fn main() -> Result<()> {
    let skeleton = Skeleton::default_14();
    let cfg = SynthConfig::default();
    let truth = sample_pose(&cfg, &skeleton, &mut sample_rng(3, 0))?.pose;
    let opts = RecoveryOptions { keep_history: true, ..Default::default() };

    let exact = recover_pose(&build_edm(&truth.joints, Units::Millimeters)?, &skeleton, &opts)?;
    println!(
        "exact input: objective {:.2e} mm^2, {} iterations, chirality {:?} (scores {} vs {})",
        exact.eq2_objective, exact.iterations, exact.chirality, exact.score_original, exact.score_reflected
    );
    println!("error after rigid alignment: {:.2e} mm", mpjpe(&exact.pose, &truth, true)?);
    println!(
        "mirror image scores {} of 14 anthropomorphic joints",
        anthropomorphism_score(&exact.pose.mirrored(), &skeleton)?
    );

    // Perturb the distances by 3% and refine.
    let mut rng = sample_rng(4, 0);
    let clean = build_edm(&truth.joints, Units::Millimeters)?;
    let mut v = clean.values().to_vec();
    for m in 0..14 {
        for k in m + 1..14 {
            let d = v[m * 14 + k] * (1.0 + rng.random_range(-0.03..0.03));
            v[m * 14 + k] = d;
            v[k * 14 + m] = d;
        }
    }
    let noisy = recover_pose(&DistanceMatrix::from_row_major(14, v, Units::Millimeters)?, &skeleton, &opts)?;
    let h = &noisy.surrogate_history;
    println!(
        "noisy input: surrogate {:.3e} -> {:.3e} over {} steps, error {:.1} mm",
        h[0],
        h[h.len() - 1],
        noisy.iterations,
        procrustes_align(&noisy.pose, &truth, AlignOptions::default())?.mean_residual()
    );
    Ok(())
}
