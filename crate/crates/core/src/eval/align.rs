//! Least-squares rigid alignment and the mean per-joint position error.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{dist3, Pose3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignOptions {
    pub allow_reflection: bool,
    pub allow_scale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Row-major; `aligned = scale * rotation * src + translation`.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
    /// Distance of each aligned source joint to its target, in the target's units.
    pub residuals: Vec<f64>,
    pub aligned: Pose3D,
}

impl AlignmentResult {
    pub fn determinant(&self) -> f64 {
        to_matrix(&self.rotation).determinant()
    }

    pub fn mean_residual(&self) -> f64 {
        self.residuals.iter().sum::<f64>() / self.residuals.len().max(1) as f64
    }
}

fn to_matrix(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| r[i][j])
}

fn centered_columns(p: &Pose3D) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let c = Vector3::from(p.centroid());
    (c, p.joints.iter().map(|q| Vector3::from(*q) - c).collect())
}

fn check_spread(cols: &[Vector3<f64>], which: &str) -> Result<()> {
    let cov: Matrix3<f64> = cols.iter().map(|v| v * v.transpose()).sum();
    let mut s = cov.symmetric_eigenvalues().as_slice().to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    if !(s[0] > 0.0) || s[1] <= 1e-20 * s[0] {
        return Err(Error::DegenerateAlignment(format!(
            "{which} joints are coincident or collinear"
        )));
    }
    Ok(())
}

/// Aligns `src` onto `dst` by the rotation (and optionally reflection and
/// scale) plus translation minimizing the summed squared joint distances.
pub fn procrustes_align(src: &Pose3D, dst: &Pose3D, opts: AlignOptions) -> Result<AlignmentResult> {
    align(src, dst, opts, true)
}

fn align(src: &Pose3D, dst: &Pose3D, opts: AlignOptions, check_source: bool) -> Result<AlignmentResult> {
    if src.len() != dst.len() {
        return Err(Error::Shape(format!("{} vs {} joints", src.len(), dst.len())));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateAlignment("fewer than 3 joints".into()));
    }
    let (cs, a) = centered_columns(src);
    let (cd, b) = centered_columns(dst);
    if check_source {
        check_spread(&a, "source")?;
    }
    check_spread(&b, "target")?;
    let h: Matrix3<f64> = a.iter().zip(&b).map(|(x, y)| x * y.transpose()).sum();
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if !opts.allow_reflection && (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v * d * u.transpose();
    let scale = if opts.allow_scale {
        let num: f64 = (0..3).map(|k| svd.singular_values[k] * d[(k, k)]).sum();
        let den: f64 = a.iter().map(|x| x.norm_squared()).sum();
        num / den
    } else {
        1.0
    };
    let t = cd - scale * r * cs;
    let aligned: Vec<[f64; 3]> = src
        .joints
        .iter()
        .map(|p| (scale * r * Vector3::from(*p) + t).into())
        .collect();
    let residuals = aligned.iter().zip(&dst.joints).map(|(p, q)| dist3(p, q)).collect();
    Ok(AlignmentResult {
        rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
        translation: t.into(),
        scale,
        residuals,
        aligned: Pose3D { joints: aligned },
    })
}

/// Per-joint Euclidean errors, after rigid alignment of `pred` onto `gt` when
/// `aligned` is set (reflection not allowed). A collapsed or collinear `pred`
/// still has a best rigid fit, so only `gt` must be well spread.
pub fn joint_errors(pred: &Pose3D, gt: &Pose3D, aligned: bool) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("{} vs {} joints", pred.len(), gt.len())));
    }
    if aligned {
        Ok(align(pred, gt, AlignOptions::default(), false)?.residuals)
    } else {
        Ok(pred.joints.iter().zip(&gt.joints).map(|(p, q)| dist3(p, q)).collect())
    }
}

/// Mean per-joint position error.
pub fn mpjpe(pred: &Pose3D, gt: &Pose3D, aligned: bool) -> Result<f64> {
    let e = joint_errors(pred, gt, aligned)?;
    Ok(e.iter().sum::<f64>() / e.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(seed: u64) -> Pose3D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Pose3D::new(
            (0..14)
                .map(|_| [rng.random_range(-500.0..500.0), rng.random_range(-900.0..900.0), rng.random_range(-200.0..200.0)])
                .collect(),
        )
        .unwrap()
    }

    fn transform(p: &Pose3D, r: &Matrix3<f64>, t: [f64; 3]) -> Pose3D {
        Pose3D {
            joints: p
                .joints
                .iter()
                .map(|q| (r * Vector3::from(*q) + Vector3::from(t)).into())
                .collect(),
        }
    }

    #[test]
    fn identity_alignment() {
        let p = random_pose(1);
        let a = procrustes_align(&p, &p, AlignOptions::default()).unwrap();
        assert!(a.residuals.iter().all(|&r| r < 1e-9));
        let r = to_matrix(&a.rotation);
        assert!((r - Matrix3::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn recovers_known_rigid_transform() {
        let p = random_pose(2);
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0).into_inner();
        let q = transform(&p, &rot, [10.0, -20.0, 5000.0]);
        let a = procrustes_align(&p, &q, AlignOptions::default()).unwrap();
        assert!(a.residuals.iter().all(|&r| r < 1e-9));
        assert!((to_matrix(&a.rotation) - rot).abs().max() < 1e-9);
    }

    #[test]
    fn mirror_needs_reflection() {
        let p = random_pose(3);
        let m = p.mirrored();
        let rigid = procrustes_align(&p, &m, AlignOptions::default()).unwrap();
        assert!(rigid.mean_residual() > 1.0);
        assert!((rigid.determinant() - 1.0).abs() < 1e-10);
        let refl = procrustes_align(&p, &m, AlignOptions { allow_reflection: true, allow_scale: false }).unwrap();
        assert!(refl.residuals.iter().all(|&r| r < 1e-9));
        assert!((refl.determinant() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn scale_option_recovers_uniform_scale() {
        let p = random_pose(4);
        let q = Pose3D { joints: p.joints.iter().map(|v| v.map(|c| 2.5 * c)).collect() };
        let a = procrustes_align(&p, &q, AlignOptions { allow_reflection: false, allow_scale: true }).unwrap();
        assert!((a.scale - 2.5).abs() < 1e-12);
        assert!(a.residuals.iter().all(|&r| r < 1e-9));
    }

    #[test]
    fn collinear_is_degenerate() {
        let p = Pose3D::new((0..5).map(|i| [i as f64, 0.0, 0.0]).collect()).unwrap();
        let q = random_pose(5);
        let q = Pose3D { joints: q.joints[..5].to_vec() };
        assert!(matches!(
            procrustes_align(&p, &q, AlignOptions::default()),
            Err(Error::DegenerateAlignment(_))
        ));
    }

    #[test]
    fn collapsed_prediction_scores_distance_to_centroid() {
        let gt = random_pose(6);
        let c = gt.centroid();
        let collapsed = Pose3D::new(vec![[5.0, 5.0, 5.0]; 14]).unwrap();
        let errs = joint_errors(&collapsed, &gt, true).unwrap();
        for (e, q) in errs.iter().zip(&gt.joints) {
            assert!((e - dist3(q, &c)).abs() < 1e-9);
        }
        assert!(joint_errors(&gt, &collapsed, true).is_err());
    }

    #[test]
    fn translation_errors() {
        let p = random_pose(6);
        let q = transform(&p, &Matrix3::identity(), [10.0, 0.0, 0.0]);
        assert_eq!(mpjpe(&p, &p, false).unwrap(), 0.0);
        assert!((mpjpe(&p, &q, false).unwrap() - 10.0).abs() < 1e-12);
        assert!(mpjpe(&p, &q, true).unwrap() < 1e-9);
    }

    proptest! {
        #[test]
        fn aligned_error_ignores_rigid_motion(seed in any::<u64>(), ax in -3.0f64..3.0, ay in -3.0f64..3.0, az in -3.0f64..3.0,
                                             tx in -1e3f64..1e3, ty in -1e3f64..1e3, tz in -1e3f64..1e3) {
            let gt = random_pose(seed);
            let pred = random_pose(seed.wrapping_add(1));
            let rot = Rotation3::from_euler_angles(ax, ay, az).into_inner();
            let moved = transform(&pred, &rot, [tx, ty, tz]);
            let a = mpjpe(&pred, &gt, true).unwrap();
            let b = mpjpe(&moved, &gt, true).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            let rigid = procrustes_align(&pred, &gt, AlignOptions::default()).unwrap();
            let refl = procrustes_align(&pred, &gt, AlignOptions { allow_reflection: true, allow_scale: false }).unwrap();
            let ss = |r: &AlignmentResult| r.residuals.iter().map(|v| v * v).sum::<f64>();
            prop_assert!(ss(&refl) <= ss(&rigid) * (1.0 + 1e-12) + 1e-12);
            let rm = to_matrix(&rigid.rotation);
            prop_assert!((rm * rm.transpose() - Matrix3::identity()).abs().max() < 1e-10);
        }
    }
}
