//! Synthetic poses from joint angles, seen through randomly placed cameras.
//!
//! Body frame: `x` to the body's right, `y` up, `z` forward, neck at the origin.
//! Each limb hangs along `-y` and is posed by `Rz(abduction) Rx(-flexion)
//! Ry(twist)`; elbows bend forward and knees backward about the limb's local `x`.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::camera::{project_camera, CameraModel};
use super::record::{DatasetRecord, Split};
use crate::error::{Error, Result};
use crate::mds::anthropomorphism_score;
use crate::pose::{Pose2D, Pose3D};
use crate::skeleton::Skeleton;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoneLengths {
    pub head: f64,
    pub shoulder: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    /// Neck to each hip.
    pub neck_hip: f64,
    pub thigh: f64,
    pub shin: f64,
    /// Angle between the neck-hip bones and the vertical, radians.
    pub hip_spread: f64,
}

impl Default for BoneLengths {
    fn default() -> Self {
        Self {
            head: 250.0,
            shoulder: 180.0,
            upper_arm: 290.0,
            forearm: 260.0,
            neck_hip: 530.0,
            thigh: 440.0,
            shin: 420.0,
            hip_spread: 0.19,
        }
    }
}

impl BoneLengths {
    fn validate(&self) -> Result<()> {
        let all = [self.head, self.shoulder, self.upper_arm, self.forearm, self.neck_hip, self.thigh, self.shin];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("bone lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Closed intervals, radians, sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AngleRanges {
    pub elbow_flexion: [f64; 2],
    pub knee_flexion: [f64; 2],
    pub shoulder_flexion: [f64; 2],
    pub shoulder_abduction: [f64; 2],
    pub humerus_rotation: [f64; 2],
    pub hip_flexion: [f64; 2],
    pub hip_abduction: [f64; 2],
    pub hip_rotation: [f64; 2],
    pub head_pitch: [f64; 2],
    pub head_roll: [f64; 2],
    pub spine_pitch: [f64; 2],
    pub spine_roll: [f64; 2],
    pub torso_twist: [f64; 2],
    pub yaw: [f64; 2],
}

impl Default for AngleRanges {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        Self {
            elbow_flexion: [0.25, 2.3],
            knee_flexion: [0.2, 2.0],
            shoulder_flexion: [-0.6, 2.4],
            shoulder_abduction: [0.0, 1.0],
            humerus_rotation: [-0.5, 0.5],
            hip_flexion: [-0.3, 1.6],
            hip_abduction: [-0.1, 0.5],
            hip_rotation: [-0.4, 0.4],
            head_pitch: [-0.3, 0.3],
            head_roll: [-0.2, 0.2],
            spine_pitch: [-0.15, 0.3],
            spine_roll: [-0.1, 0.1],
            torso_twist: [-0.2, 0.2],
            yaw: [-pi, pi],
        }
    }
}

impl AngleRanges {
    fn all(&self) -> [[f64; 2]; 14] {
        [
            self.elbow_flexion,
            self.knee_flexion,
            self.shoulder_flexion,
            self.shoulder_abduction,
            self.humerus_rotation,
            self.hip_flexion,
            self.hip_abduction,
            self.hip_rotation,
            self.head_pitch,
            self.head_roll,
            self.spine_pitch,
            self.spine_roll,
            self.torso_twist,
            self.yaw,
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.all().iter().any(|[lo, hi]| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidArgument("angle ranges must be finite with lo <= hi".into()));
        }
        Ok(())
    }
}

/// Camera placement around the body, sampled per pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraRanges {
    /// Millimeters from the look-at target.
    pub distance: [f64; 2],
    /// Radians above the horizontal.
    pub elevation: [f64; 2],
    pub azimuth: [f64; 2],
    /// Height of the look-at target relative to the neck, mm.
    pub target_height: [f64; 2],
    pub focal: f64,
    pub principal: [f64; 2],
}

impl Default for CameraRanges {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        Self {
            distance: [3500.0, 6000.0],
            elevation: [-0.2, 0.4],
            azimuth: [-pi, pi],
            target_height: [-500.0, -200.0],
            focal: 1000.0,
            principal: [500.0, 500.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Fractions of the samples placed in the validation and test splits
    /// (rounded); the rest is training data.
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub bones: BoneLengths,
    pub angles: AngleRanges,
    pub camera: CameraRanges,
    /// Gaussian pixel noise added to the stored 2D joints.
    pub noise_sigma: f64,
    /// Resampling attempts per pose before giving up.
    pub max_retries: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            seed: 0,
            val_fraction: 0.0,
            test_fraction: 0.1,
            bones: BoneLengths::default(),
            angles: AngleRanges::default(),
            camera: CameraRanges::default(),
            noise_sigma: 0.0,
            max_retries: 1000,
        }
    }
}

impl SynthConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self { n_samples, seed, ..Default::default() }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("number of samples must be at least 1".into()));
        }
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !frac_ok(self.val_fraction) || !frac_ok(self.test_fraction) || self.val_fraction + self.test_fraction > 1.0 {
            return Err(Error::InvalidArgument("split fractions must lie in [0, 1] and sum to at most 1".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument("noise sigma must be >= 0".into()));
        }
        if self.max_retries == 0 {
            return Err(Error::InvalidArgument("max_retries must be at least 1".into()));
        }
        let c = &self.camera;
        if !(c.focal > 0.0) || !(c.distance[0] > 0.0) || c.distance[0] > c.distance[1] {
            return Err(Error::InvalidArgument("camera focal length and distances must be positive".into()));
        }
        self.bones.validate()?;
        self.angles.validate()
    }

    /// Number of samples in each split, in file order train, val, test.
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let n = self.n_samples as f64;
        let val = (n * self.val_fraction).round() as usize;
        let test = ((n * self.test_fraction).round() as usize).min(self.n_samples - val);
        (self.n_samples - val - test, val, test)
    }
}

/// Joint angles of one pose.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseAngles {
    /// Right then left.
    pub elbow_flexion: [f64; 2],
    pub knee_flexion: [f64; 2],
    pub shoulder_flexion: [f64; 2],
    pub shoulder_abduction: [f64; 2],
    pub humerus_rotation: [f64; 2],
    pub hip_flexion: [f64; 2],
    pub hip_abduction: [f64; 2],
    pub hip_rotation: [f64; 2],
    pub head_pitch: f64,
    pub head_roll: f64,
    pub spine_pitch: f64,
    pub spine_roll: f64,
    pub torso_twist: f64,
    pub yaw: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

impl PoseAngles {
    pub fn sample<R: Rng + ?Sized>(r: &AngleRanges, rng: &mut R) -> Self {
        let mut pair = |range| [uniform(rng, range), uniform(rng, range)];
        Self {
            elbow_flexion: pair(r.elbow_flexion),
            knee_flexion: pair(r.knee_flexion),
            shoulder_flexion: pair(r.shoulder_flexion),
            shoulder_abduction: pair(r.shoulder_abduction),
            humerus_rotation: pair(r.humerus_rotation),
            hip_flexion: pair(r.hip_flexion),
            hip_abduction: pair(r.hip_abduction),
            hip_rotation: pair(r.hip_rotation),
            head_pitch: uniform(rng, r.head_pitch),
            head_roll: uniform(rng, r.head_roll),
            spine_pitch: uniform(rng, r.spine_pitch),
            spine_roll: uniform(rng, r.spine_roll),
            torso_twist: uniform(rng, r.torso_twist),
            yaw: uniform(rng, r.yaw),
        }
    }
}

fn rx(a: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), a).into_inner()
}

fn ry(a: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), a).into_inner()
}

fn rz(a: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), a).into_inner()
}

/// Forward kinematics of the 14-joint body, neck at the origin.
pub fn forward_kinematics(b: &BoneLengths, a: &PoseAngles) -> Pose3D {
    let down = Vector3::new(0.0, -1.0, 0.0);
    let global = ry(a.yaw);
    // The upper body leans and twists relative to the pelvis.
    let upper = global * ry(a.torso_twist) * rx(a.spine_pitch) * rz(a.spine_roll);
    let lower = global;
    let neck = Vector3::zeros();
    let head = neck + upper * rx(a.head_pitch) * rz(a.head_roll) * Vector3::new(0.0, b.head, 0.0);
    let mut j = vec![Vector3::zeros(); 14];
    j[0] = head;
    j[1] = neck;
    // Side 0 is the right (+x), side 1 the left.
    for side in 0..2 {
        let s = if side == 0 { 1.0 } else { -1.0 };
        let (sho, elb, wri, hip, knee, ank) = if side == 0 { (2, 3, 4, 8, 9, 10) } else { (5, 6, 7, 11, 12, 13) };
        j[sho] = neck + upper * Vector3::new(s * b.shoulder, 0.0, 0.0);
        let arm = upper
            * rz(s * a.shoulder_abduction[side])
            * rx(-a.shoulder_flexion[side])
            * ry(s * a.humerus_rotation[side]);
        j[elb] = j[sho] + arm * down * b.upper_arm;
        j[wri] = j[elb] + arm * rx(-a.elbow_flexion[side]) * down * b.forearm;
        j[hip] = neck + lower * Vector3::new(s * b.hip_spread.sin(), -b.hip_spread.cos(), 0.0) * b.neck_hip;
        let leg = lower
            * rz(s * a.hip_abduction[side])
            * rx(-a.hip_flexion[side])
            * ry(s * a.hip_rotation[side]);
        j[knee] = j[hip] + leg * down * b.thigh;
        j[ank] = j[knee] + leg * rx(a.knee_flexion[side]) * down * b.shin;
    }
    Pose3D { joints: j.into_iter().map(Into::into).collect() }
}

/// Upright pose with every hinge bent to mid-range and no global rotation.
pub fn neutral_pose(b: &BoneLengths) -> Pose3D {
    let a = PoseAngles {
        elbow_flexion: [1.2, 1.2],
        knee_flexion: [1.0, 1.0],
        shoulder_flexion: [0.3, 0.3],
        shoulder_abduction: [0.2, 0.2],
        hip_flexion: [0.3, 0.3],
        hip_abduction: [0.1, 0.1],
        ..Default::default()
    };
    forward_kinematics(b, &a)
}

/// One sampled pose with its camera and projection.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub angles: PoseAngles,
    pub pose: Pose3D,
    pub camera: CameraModel,
    pub projection: Pose2D,
}

fn sample_camera<R: Rng + ?Sized>(c: &CameraRanges, rng: &mut R) -> Result<CameraModel> {
    let dist = uniform(rng, c.distance);
    let elev = uniform(rng, c.elevation);
    let azim = uniform(rng, c.azimuth);
    let target = [0.0, uniform(rng, c.target_height), 0.0];
    let center = [
        target[0] + dist * elev.cos() * azim.sin(),
        target[1] + dist * elev.sin(),
        target[2] + dist * elev.cos() * azim.cos(),
    ];
    CameraModel::look_at(c.focal, c.principal, center, target, [0.0, 1.0, 0.0])
}

/// Draws poses until one is fully anthropomorphic and in front of its camera.
pub fn sample_pose<R: Rng + ?Sized>(cfg: &SynthConfig, skeleton: &Skeleton, rng: &mut R) -> Result<SynthSample> {
    for _ in 0..cfg.max_retries {
        let angles = PoseAngles::sample(&cfg.angles, rng);
        let pose = forward_kinematics(&cfg.bones, &angles);
        let camera = sample_camera(&cfg.camera, rng)?;
        if anthropomorphism_score(&pose, skeleton)? < skeleton.n_joints() {
            continue;
        }
        match project_camera(&pose, &camera) {
            Ok(projection) => return Ok(SynthSample { angles, pose, camera, projection }),
            Err(Error::BehindCamera { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::InvalidArgument(format!(
        "no valid pose after {} attempts; check angle and camera ranges",
        cfg.max_retries
    )))
}

/// Random stream of sample `index`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Generates the dataset described by `cfg` (deterministic per seed).
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Vec<DatasetRecord>> {
    cfg.validate()?;
    let skeleton = Skeleton::default_14();
    let (n_train, n_val, _) = cfg.split_counts();
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    (0..cfg.n_samples)
        .map(|i| {
            let mut rng = sample_rng(cfg.seed, i as u64);
            let s = sample_pose(cfg, &skeleton, &mut rng)?;
            let mut joints2d = s.projection.joints;
            if cfg.noise_sigma > 0.0 {
                for p in &mut joints2d {
                    p[0] += noise.sample(&mut rng);
                    p[1] += noise.sample(&mut rng);
                }
            }
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            Ok(DatasetRecord {
                id: format!("synth-{i:06}"),
                joints2d,
                joints3d: s.pose.joints,
                visibility: vec![true; skeleton.n_joints()],
                split,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::write_jsonl;
    use crate::pose::dist3;

    #[test]
    fn bone_lengths_match_table() {
        let cfg = SynthConfig::new(200, 3);
        let b = &cfg.bones;
        let want = [
            (0, 1, b.head),
            (2, 1, b.shoulder),
            (5, 1, b.shoulder),
            (3, 2, b.upper_arm),
            (6, 5, b.upper_arm),
            (4, 3, b.forearm),
            (7, 6, b.forearm),
            (8, 1, b.neck_hip),
            (11, 1, b.neck_hip),
            (9, 8, b.thigh),
            (12, 11, b.thigh),
            (10, 9, b.shin),
            (13, 12, b.shin),
        ];
        let sk = Skeleton::default_14();
        for i in 0..200 {
            let s = sample_pose(&cfg, &sk, &mut sample_rng(3, i)).unwrap();
            for &(c, p, len) in &want {
                assert!((dist3(&s.pose.joints[c], &s.pose.joints[p]) - len).abs() < 1e-9);
            }
            assert_eq!(anthropomorphism_score(&s.pose, &sk).unwrap(), 14);
        }
    }

    #[test]
    fn projection_matches_pinhole_formula() {
        let cfg = SynthConfig::new(1, 5);
        let s = sample_pose(&cfg, &Skeleton::default_14(), &mut sample_rng(5, 0)).unwrap();
        let r = &s.camera.rotation;
        let t = &s.camera.translation;
        for (p, uv) in s.pose.joints.iter().zip(&s.projection.joints) {
            let q: Vec<f64> = (0..3).map(|k| r[k][0] * p[0] + r[k][1] * p[1] + r[k][2] * p[2] + t[k]).collect();
            assert!((uv[0] - (1000.0 * q[0] / q[2] + 500.0)).abs() < 1e-9);
            assert!((uv[1] - (1000.0 * q[1] / q[2] + 500.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn most_sampled_angles_are_accepted() {
        let cfg = SynthConfig::default();
        let sk = Skeleton::default_14();
        let mut rng = sample_rng(0, 0);
        let accepted = (0..500)
            .filter(|_| {
                let a = PoseAngles::sample(&cfg.angles, &mut rng);
                anthropomorphism_score(&forward_kinematics(&cfg.bones, &a), &sk).unwrap() == 14
            })
            .count();
        assert!(accepted > 450, "{accepted}");
    }

    #[test]
    fn files_are_reproducible() {
        let cfg = SynthConfig::new(100, 42);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        write_jsonl(&a, &synth_dataset(&cfg).unwrap()).unwrap();
        write_jsonl(&b, &synth_dataset(&cfg).unwrap()).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn splits_and_validation() {
        let mut cfg = SynthConfig::new(50, 1);
        cfg.val_fraction = 0.2;
        assert_eq!(cfg.split_counts(), (35, 10, 5));
        let recs = synth_dataset(&cfg).unwrap();
        assert_eq!(recs.iter().filter(|r| r.split == Split::Test).count(), 5);
        assert!(recs.iter().all(|r| r.validate(14).is_ok()));
        assert!(synth_dataset(&SynthConfig::new(0, 1)).is_err());
    }

    #[test]
    fn config_file_overrides_defaults() {
        let cfg = SynthConfig::from_json_str(r#"{"bones": {"thigh": 500}, "noise_sigma": 2}"#).unwrap();
        assert_eq!(cfg.bones.thigh, 500.0);
        assert_eq!(cfg.bones.shin, 420.0);
        assert_eq!(cfg.noise_sigma, 2.0);
        assert!(SynthConfig::from_json_str(r#"{"bogus": 1}"#).is_err());
    }
}
