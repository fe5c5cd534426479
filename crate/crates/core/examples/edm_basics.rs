//! Distance matrices of a 2D and a 3D pose: construction, normalization,
//! packing and occlusion.
//!
//! cargo run --example edm_basics

use edm_pose::data::synth::{neutral_pose, BoneLengths};
use edm_pose::data::CameraModel;
use edm_pose::edm::{apply_occlusion, observation_edm, pack_upper, unpack_upper};
use edm_pose::{build_edm, ObservedPose2D, Result, Skeleton, Units};

fn main() -> Result<()> {
    let skeleton = Skeleton::default_14();
    let pose = neutral_pose(&BoneLengths::default());
    let d3 = build_edm(&pose.joints, Units::Millimeters)?;
    let (h, a) = (skeleton.index_of("head").unwrap(), skeleton.index_of("left_ankle").unwrap());
    println!("head to left ankle: {:.1} mm", d3.get(h, a));
    println!("3D matrix is a clean EDM: {}", d3.validate().is_clean());

    let camera = CameraModel::look_at(1000.0, [500.0, 500.0], [0.0, -300.0, 4500.0], [0.0, -300.0, 0.0], [0.0, 1.0, 0.0])?;
    let image = edm_pose::data::project_camera(&pose, &camera)?;
    let obs = ObservedPose2D::fully_visible(image)?;
    let d2 = observation_edm(&obs)?;
    println!("largest normalized 2D distance: {:.3}", d2.values().iter().cloned().fold(0.0, f64::max));

    let packed = pack_upper(&d2);
    println!("packed network input: {} values", packed.len());
    assert_eq!(unpack_upper(&packed, 14, Units::Dimensionless)?, d2);

    let arm = skeleton.limb_group("right_arm").unwrap();
    let mut visible = vec![true; 14];
    arm.iter().for_each(|&j| visible[j] = false);
    let hidden = apply_occlusion(&d2, &visible)?;
    for j in arm {
        println!("{} row after occlusion: {:?}", skeleton.names()[j], &hidden.row(j)[..4]);
    }
    Ok(())
}
