//! Detector-noise and occlusion protocols.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::pose::{ObservedPose2D, Pose2D};
use crate::skeleton::Skeleton;

/// Adds `N(0, sigma)` pixel noise to both coordinates of every visible joint.
pub fn inject_noise<R: Rng + ?Sized>(
    pose: &Pose2D,
    visibility: Option<&[bool]>,
    sigma: f64,
    rng: &mut R,
) -> Result<Pose2D> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise sigma {sigma} must be >= 0")));
    }
    if pose.is_normalized() {
        return Err(Error::NotRaw);
    }
    if let Some(v) = visibility {
        if v.len() != pose.len() {
            return Err(Error::Shape(format!("{} flags for {} joints", v.len(), pose.len())));
        }
    }
    if sigma == 0.0 {
        return Ok(pose.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = pose.clone();
    for (j, p) in out.joints.iter_mut().enumerate() {
        if visibility.is_none_or(|v| v[j]) {
            p[0] += normal.sample(rng);
            p[1] += normal.sample(rng);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskKind {
    Random2,
    RightArm,
    LeftArm,
    RightLeg,
    LeftLeg,
}

impl MaskKind {
    pub const ALL: [MaskKind; 5] = [
        MaskKind::Random2,
        MaskKind::RightArm,
        MaskKind::LeftArm,
        MaskKind::RightLeg,
        MaskKind::LeftLeg,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MaskKind::Random2 => "random2",
            MaskKind::RightArm => "right_arm",
            MaskKind::LeftArm => "left_arm",
            MaskKind::RightLeg => "right_leg",
            MaskKind::LeftLeg => "left_leg",
        }
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownMaskKind(s.to_string()))
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Visibility flags with the joints selected by `kind` hidden.
pub fn make_occlusion_mask<R: Rng + ?Sized>(kind: MaskKind, skeleton: &Skeleton, rng: &mut R) -> Result<Vec<bool>> {
    let n = skeleton.n_joints();
    let mut vis = vec![true; n];
    let hidden: Vec<usize> = match kind {
        MaskKind::Random2 => index::sample(rng, n, 2).into_vec(),
        limb => skeleton
            .limb_group(limb.as_str())
            .ok_or_else(|| Error::UnknownMaskKind(format!("{limb} (not a limb group of this skeleton)")))?
            .to_vec(),
    };
    for j in hidden {
        vis[j] = false;
    }
    Ok(vis)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolKind {
    Clean,
    Noise(f64),
    Occlusion(MaskKind),
}

/// An evaluation protocol with the seed of its random perturbations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub seed: u64,
}

impl ProtocolSpec {
    pub fn clean() -> Self {
        Self { kind: ProtocolKind::Clean, seed: 0 }
    }

    pub fn noise(sigma: f64, seed: u64) -> Self {
        Self { kind: ProtocolKind::Noise(sigma), seed }
    }

    pub fn occlusion(mask: MaskKind, seed: u64) -> Self {
        Self { kind: ProtocolKind::Occlusion(mask), seed }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Random stream for sample `index`, independent of evaluation order.
    pub fn sample_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// Perturbs one raw observation. Occlusion hides joints in addition to the
    /// ones already hidden.
    pub fn apply(&self, obs: &ObservedPose2D, skeleton: &Skeleton, index: u64) -> Result<ObservedPose2D> {
        let mut rng = self.sample_rng(index);
        match self.kind {
            ProtocolKind::Clean => Ok(obs.clone()),
            ProtocolKind::Noise(sigma) => {
                let pose = inject_noise(&obs.pose, Some(&obs.visibility), sigma, &mut rng)?;
                ObservedPose2D::new(pose, obs.visibility.clone())
            }
            ProtocolKind::Occlusion(kind) => {
                let mask = make_occlusion_mask(kind, skeleton, &mut rng)?;
                let vis = obs.visibility.iter().zip(&mask).map(|(a, b)| *a && *b).collect();
                ObservedPose2D::new(obs.pose.clone(), vis)
            }
        }
    }
}

impl fmt::Display for ProtocolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ProtocolKind::Clean => f.write_str("clean"),
            ProtocolKind::Noise(s) => write!(f, "noise:{s}"),
            ProtocolKind::Occlusion(k) => write!(f, "occlusion:{k}"),
        }
    }
}

impl FromStr for ProtocolSpec {
    type Err = Error;

    /// Parses `clean`, `noise:SIGMA` or `occlusion:KIND` (seed 0).
    fn from_str(s: &str) -> Result<Self> {
        let kind = match s.split_once(':') {
            None if s == "clean" => ProtocolKind::Clean,
            Some(("noise", v)) => {
                let sigma: f64 = v
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad noise sigma `{v}`")))?;
                if !(sigma >= 0.0) || !sigma.is_finite() {
                    return Err(Error::InvalidArgument(format!("noise sigma {sigma} must be >= 0")));
                }
                ProtocolKind::Noise(sigma)
            }
            Some(("occlusion", k)) => ProtocolKind::Occlusion(k.parse()?),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown protocol `{s}` (expected clean, noise:S or occlusion:KIND)"
                )))
            }
        };
        Ok(Self { kind, seed: 0 })
    }
}

impl Serialize for ProtocolSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ProtocolSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_pose(seed: u64, n: usize) -> Pose2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Pose2D::raw((0..n).map(|_| [rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)]).collect()).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let p = raw_pose(1, 14);
        let out = inject_noise(&p, None, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out, p);
        assert!(inject_noise(&p, None, -1.0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn noise_has_requested_spread_and_replays() {
        let p = raw_pose(2, 10_000);
        let a = inject_noise(&p, None, 10.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = inject_noise(&p, None, 10.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        for c in 0..2 {
            let d: Vec<f64> = a.joints.iter().zip(&p.joints).map(|(x, y)| x[c] - y[c]).collect();
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
            assert!((sd / 10.0 - 1.0).abs() < 0.02, "sd {sd}");
        }
    }

    #[test]
    fn hidden_joints_stay_put() {
        let p = raw_pose(3, 14);
        let mut vis = vec![true; 14];
        vis[0] = false;
        let out = inject_noise(&p, Some(&vis), 5.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.joints[0], p.joints[0]);
        assert_ne!(out.joints[1], p.joints[1]);
    }

    #[test]
    fn limb_masks() {
        let sk = Skeleton::default_14();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hidden = |k| -> Vec<usize> {
            let m = make_occlusion_mask(k, &sk, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            (0..14).filter(|&j| !m[j]).collect()
        };
        let idx = |n: &str| sk.index_of(n).unwrap();
        assert_eq!(hidden(MaskKind::RightArm), vec![idx("right_elbow"), idx("right_wrist")]);
        assert_eq!(hidden(MaskKind::LeftLeg), vec![idx("left_knee"), idx("left_ankle")]);
        let m = make_occlusion_mask(MaskKind::Random2, &sk, &mut rng).unwrap();
        assert_eq!(m.iter().filter(|v| !**v).count(), 2);
    }

    #[test]
    fn random_pairs_are_uniform() {
        let sk = Skeleton::default_14();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 91_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            let m = make_occlusion_mask(MaskKind::Random2, &sk, &mut rng).unwrap();
            let h: Vec<usize> = (0..14).filter(|&j| !m[j]).collect();
            *counts.entry((h[0], h[1])).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 91);
        // Expected 1000 per pair; 5 standard deviations is about 158.
        let chi2: f64 = counts.values().map(|&c| (c as f64 - 1000.0).powi(2) / 1000.0).sum();
        assert!(counts.values().all(|&c| (c as f64 - 1000.0).abs() < 160.0), "{counts:?}");
        // 90 degrees of freedom; the 99.9% quantile is about 137.
        assert!(chi2 < 137.0, "chi2 {chi2}");
    }

    #[test]
    fn protocol_strings() {
        assert_eq!("clean".parse::<ProtocolSpec>().unwrap().kind, ProtocolKind::Clean);
        assert_eq!("noise:5".parse::<ProtocolSpec>().unwrap().kind, ProtocolKind::Noise(5.0));
        assert_eq!(
            "occlusion:left_arm".parse::<ProtocolSpec>().unwrap().kind,
            ProtocolKind::Occlusion(MaskKind::LeftArm)
        );
        assert!(matches!("occlusion:tail".parse::<ProtocolSpec>(), Err(Error::UnknownMaskKind(_))));
        assert!("noise:-1".parse::<ProtocolSpec>().is_err());
        assert!("blur".parse::<ProtocolSpec>().is_err());
        for s in ["clean", "noise:12.5", "occlusion:random2"] {
            assert_eq!(s.parse::<ProtocolSpec>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn per_sample_streams_are_order_independent() {
        let sk = Skeleton::default_14();
        let obs = ObservedPose2D::fully_visible(raw_pose(4, 14)).unwrap();
        let p = ProtocolSpec::noise(5.0, 3);
        let a = p.apply(&obs, &sk, 17).unwrap();
        let _ = p.apply(&obs, &sk, 16).unwrap();
        assert_eq!(a, p.apply(&obs, &sk, 17).unwrap());
        assert_ne!(a, p.apply(&obs, &sk, 18).unwrap());
    }
}
