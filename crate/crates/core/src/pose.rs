//! Joint-coordinate containers and 2D normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest visible joints a lifting request may carry; below this the 3D
/// configuration is rank-deficient.
pub const MIN_VISIBLE: usize = 4;

/// 3D joint positions in millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose3D {
    pub joints: Vec<[f64; 3]>,
}

impl Pose3D {
    pub fn new(joints: Vec<[f64; 3]>) -> Result<Self> {
        if joints.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite 3D coordinate".into()));
        }
        Ok(Self { joints })
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.joints.len().max(1) as f64;
        let mut c = [0.0; 3];
        for p in &self.joints {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        c.map(|v| v / n)
    }

    /// Copy translated so that the centroid sits at the origin.
    pub fn centered(&self) -> Self {
        let c = self.centroid();
        Self {
            joints: self
                .joints
                .iter()
                .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
                .collect(),
        }
    }

    /// Mirror image obtained by negating the first coordinate axis.
    pub fn mirrored(&self) -> Self {
        Self {
            joints: self.joints.iter().map(|p| [-p[0], p[1], p[2]]).collect(),
        }
    }

    /// Largest distance between any two joints.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.joints.iter().enumerate() {
            for b in &self.joints[i + 1..] {
                d = d.max(dist3(a, b));
            }
        }
        d
    }
}

pub(crate) fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Parameters of the affine map applied by [`normalize_2d`]:
/// `normalized = scale * (raw - center)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub center_u: f64,
    pub center_v: f64,
    pub scale: f64,
}

/// 2D joint positions, either raw pixels or normalized (dimensionless).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub joints: Vec<[f64; 2]>,
    pub norm: Option<NormParams>,
}

impl Pose2D {
    /// A pose in raw pixel coordinates.
    pub fn raw(joints: Vec<[f64; 2]>) -> Result<Self> {
        if joints.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite 2D coordinate".into()));
        }
        Ok(Self { joints, norm: None })
    }

    pub fn is_normalized(&self) -> bool {
        self.norm.is_some()
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// Maps normalized coordinates back to pixels. Raw poses are returned as-is.
    pub fn denormalized(&self) -> Self {
        match self.norm {
            None => self.clone(),
            Some(p) => Self {
                joints: self
                    .joints
                    .iter()
                    .map(|q| [q[0] / p.scale + p.center_u, q[1] / p.scale + p.center_v])
                    .collect(),
                norm: None,
            },
        }
    }
}

/// A 2D pose with a per-joint visibility mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPose2D {
    pub pose: Pose2D,
    pub visibility: Vec<bool>,
}

impl ObservedPose2D {
    pub fn new(pose: Pose2D, visibility: Vec<bool>) -> Result<Self> {
        if visibility.len() != pose.len() {
            return Err(Error::Shape(format!(
                "{} joints but {} visibility flags",
                pose.len(),
                visibility.len()
            )));
        }
        let visible = visibility.iter().filter(|&&v| v).count();
        if visible < MIN_VISIBLE {
            return Err(Error::TooFewObservations {
                visible,
                required: MIN_VISIBLE,
            });
        }
        Ok(Self { pose, visibility })
    }

    pub fn fully_visible(pose: Pose2D) -> Result<Self> {
        let n = pose.len();
        Self::new(pose, vec![true; n])
    }

    pub fn n_visible(&self) -> usize {
        self.visibility.iter().filter(|&&v| v).count()
    }

    /// Normalizes over the visible joints; hidden joints are set to `(0, 0)`.
    pub fn normalized(&self) -> Result<Self> {
        let pose = normalize_visible(&self.pose, &self.visibility)?;
        Ok(Self {
            pose,
            visibility: self.visibility.clone(),
        })
    }
}

/// Maps a raw pose so its vertical extent spans exactly `[-1, 1]`; the same scale
/// is applied horizontally about the horizontal midpoint.
pub fn normalize_2d(pose: &Pose2D) -> Result<Pose2D> {
    normalize_visible(pose, &vec![true; pose.len()])
}

pub(crate) fn normalize_visible(pose: &Pose2D, visible: &[bool]) -> Result<Pose2D> {
    if pose.is_normalized() {
        return Err(Error::AlreadyNormalized);
    }
    let pts: Vec<&[f64; 2]> = pose
        .joints
        .iter()
        .zip(visible)
        .filter(|(_, &v)| v)
        .map(|(p, _)| p)
        .collect();
    if pts.is_empty() {
        return Err(Error::DegeneratePose("no visible joints".into()));
    }
    let (mut u_min, mut u_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut v_min, mut v_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        u_min = u_min.min(p[0]);
        u_max = u_max.max(p[0]);
        v_min = v_min.min(p[1]);
        v_max = v_max.max(p[1]);
    }
    let extent = v_max - v_min;
    if !(extent > 0.0) {
        return Err(Error::DegeneratePose("zero vertical extent".into()));
    }
    let params = NormParams {
        center_u: 0.5 * (u_min + u_max),
        center_v: 0.5 * (v_min + v_max),
        scale: 2.0 / extent,
    };
    let joints = pose
        .joints
        .iter()
        .zip(visible)
        .map(|(p, &vis)| {
            if !vis {
                return [0.0, 0.0];
            }
            // Pin the extremes so the range is exactly [-1, 1] despite rounding.
            let v = if p[1] == v_min {
                -1.0
            } else if p[1] == v_max {
                1.0
            } else {
                params.scale * (p[1] - params.center_v)
            };
            [params.scale * (p[0] - params.center_u), v]
        })
        .collect();
    Ok(Pose2D {
        joints,
        norm: Some(params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pts: &[[f64; 2]]) -> Pose2D {
        Pose2D::raw(pts.to_vec()).unwrap()
    }

    #[test]
    fn vertical_range_maps_to_unit_interval() {
        let p = raw(&[[10.0, 100.0], [20.0, 300.0], [30.0, 200.0]]);
        let n = normalize_2d(&p).unwrap();
        let params = n.norm.unwrap();
        assert_eq!(params.scale, 0.01);
        assert_eq!(n.joints[0][1], -1.0);
        assert_eq!(n.joints[1][1], 1.0);
        assert_eq!(n.joints[2][1], 0.0);
        // Horizontal axis uses the same scale about its midpoint (20).
        assert!((n.joints[0][0] + 0.1).abs() < 1e-15);
        assert!((n.joints[2][0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn double_normalization_is_refused() {
        let n = normalize_2d(&raw(&[[0.0, 0.0], [1.0, 2.0]])).unwrap();
        assert!(matches!(normalize_2d(&n), Err(Error::AlreadyNormalized)));
    }

    #[test]
    fn translation_does_not_change_normalized_pose() {
        let a = raw(&[[3.0, 7.0], [40.0, 90.0], [12.5, 33.0], [80.0, 61.0]]);
        let b = raw(&a.joints.iter().map(|p| [p[0] + 50.0, p[1] + 50.0]).collect::<Vec<_>>());
        assert_eq!(normalize_2d(&a).unwrap().joints, normalize_2d(&b).unwrap().joints);
    }

    #[test]
    fn flat_pose_is_degenerate() {
        let p = raw(&[[0.0, 5.0], [10.0, 5.0], [20.0, 5.0]]);
        assert!(matches!(normalize_2d(&p), Err(Error::DegeneratePose(_))));
    }

    #[test]
    fn hidden_joints_do_not_affect_range_and_are_zeroed() {
        let p = raw(&[[0.0, 0.0], [0.0, 10.0], [5.0, 5.0], [2.0, 8.0], [999.0, 999.0]]);
        let obs = ObservedPose2D::new(p, vec![true, true, true, true, false]).unwrap();
        let n = obs.normalized().unwrap();
        assert_eq!(n.pose.norm.unwrap().scale, 0.2);
        assert_eq!(n.pose.joints[4], [0.0, 0.0]);
    }

    #[test]
    fn observation_needs_four_visible_joints() {
        let p = raw(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]);
        let err = ObservedPose2D::new(p, vec![true, true, true, false]).unwrap_err();
        assert!(matches!(err, Error::TooFewObservations { visible: 3, .. }));
    }

    #[test]
    fn denormalize_inverts_normalize() {
        let p = raw(&[[31.0, 7.0], [40.0, 90.0], [12.5, 33.0]]);
        let back = normalize_2d(&p).unwrap().denormalized();
        for (a, b) in p.joints.iter().zip(&back.joints) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }
}
