//! Pinhole cameras.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Pose2D, Pose3D};

/// Maps world points `X` to camera coordinates `R X + t`, then to pixels
/// `u = f x / z + cx`, `v = f y / z + cy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal: f64,
    pub principal: [f64; 2],
    /// Row-major world-to-camera rotation.
    pub rotation: [[f64; 3]; 3],
    /// Millimeters.
    pub translation: [f64; 3],
}

impl CameraModel {
    pub fn new(focal: f64, principal: [f64; 2], rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        let cam = Self { focal, principal, rotation, translation };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) || !self.focal.is_finite() {
            return Err(Error::InvalidArgument(format!("focal length {} must be positive", self.focal)));
        }
        let r = self.rotation_matrix();
        if (r * r.transpose() - Matrix3::identity()).abs().max() > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("camera rotation is not orthonormal".into()));
        }
        Ok(())
    }

    /// Camera at `center` looking at `target`, with `up` mapping to the
    /// negative image `v` direction.
    pub fn look_at(focal: f64, principal: [f64; 2], center: [f64; 3], target: [f64; 3], up: [f64; 3]) -> Result<Self> {
        let c = Vector3::from(center);
        let z = Vector3::from(target) - c;
        if z.norm() == 0.0 {
            return Err(Error::InvalidArgument("camera center equals its target".into()));
        }
        let z = z.normalize();
        let x = z.cross(&Vector3::from(up));
        if x.norm() < 1e-12 {
            return Err(Error::InvalidArgument("viewing direction is parallel to up".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let t = -(r * c);
        Self::new(
            focal,
            principal,
            std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
            t.into(),
        )
    }

    fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    pub fn to_camera(&self, p: &[f64; 3]) -> [f64; 3] {
        (self.rotation_matrix() * Vector3::from(*p) + Vector3::from(self.translation)).into()
    }
}

/// Perspective projection of every joint; all joints must have positive depth.
pub fn project_camera(pose: &Pose3D, cam: &CameraModel) -> Result<Pose2D> {
    let joints = pose
        .joints
        .iter()
        .enumerate()
        .map(|(joint, p)| {
            let q = cam.to_camera(p);
            if !(q[2] > 0.0) {
                return Err(Error::BehindCamera { joint, depth: q[2] });
            }
            Ok([
                cam.focal * q[0] / q[2] + cam.principal[0],
                cam.focal * q[1] / q[2] + cam.principal[1],
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Pose2D::raw(joints)
}
