//! 3D joint recovery from a distance matrix and reflection disambiguation.
//!
//! Recovery minimizes the sum of absolute squared-distance residuals
//! `sum |‖p_m - p_n‖² - d_mn²|` over ordered pairs. It starts from classical
//! MDS and refines by gradient descent on the smooth surrogate
//! `sum_{m<n} (‖p_m - p_n‖² - d_mn²)²`. The mirror image of the refined pose
//! fits the matrix equally well, so the candidate with more joints inside the
//! skeleton's hinge limits is returned.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::edm::DistanceMatrix;
use crate::error::{Error, Result};
use crate::pose::Pose3D;
use crate::skeleton::{Flexion, Hinge, Skeleton};

pub const EMBED_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the surrogate by less than this fraction.
    pub tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor on rejection.
    pub shrink: f64,
    /// Step growth factor after an accepted step.
    pub grow: f64,
    /// Record the surrogate after every accepted step.
    pub keep_history: bool,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-10,
            armijo: 1e-4,
            shrink: 0.5,
            grow: 2.0,
            keep_history: false,
        }
    }
}

impl RecoveryOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1 and tolerance positive".into(),
            ));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0)
            || !(self.shrink > 0.0 && self.shrink < 1.0)
            || !(self.grow >= 1.0)
        {
            return Err(Error::InvalidArgument("invalid backtracking parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chirality {
    Original,
    Reflected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    /// Centered at the origin.
    pub pose: Pose3D,
    /// `sum |‖p_m - p_n‖² - d_mn²|` over ordered pairs, in squared matrix units.
    pub eq2_objective: f64,
    pub iterations: usize,
    pub chirality: Chirality,
    pub score_original: usize,
    pub score_reflected: usize,
    /// Surrogate before refinement and after each accepted step (when requested).
    pub surrogate_history: Vec<f64>,
}

fn squared(edm: &DistanceMatrix) -> Vec<f64> {
    edm.values().iter().map(|d| d * d).collect()
}

/// Classical MDS: top eigenpairs of the double-centered Gram matrix.
pub fn classical_mds(edm: &DistanceMatrix, dim: usize) -> Result<Pose3D> {
    let n = edm.n();
    if dim == 0 || dim > EMBED_DIM {
        return Err(Error::InvalidArgument(format!("embedding dimension {dim} not in 1..=3")));
    }
    if n < dim + 1 {
        return Err(Error::InvalidInput(format!("{n} points cannot span {dim} dimensions")));
    }
    let gram = crate::edm::gram_from_distances(n, edm.values());
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numeric("classical MDS", "eigensolver did not converge"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    if !top.is_finite() {
        return Err(Error::numeric("classical MDS", "non-finite eigenvalue"));
    }
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top < -1e-12 * scale {
        return Err(Error::DegenerateMatrix(format!(
            "largest Gram eigenvalue {top:e} is negative"
        )));
    }
    let mut joints = vec![[0.0; 3]; n];
    for (axis, &k) in order.iter().take(dim).enumerate() {
        let s = eig.eigenvalues[k].max(0.0).sqrt();
        for (i, p) in joints.iter_mut().enumerate() {
            p[axis] = s * eig.eigenvectors[(i, k)];
        }
    }
    Ok(Pose3D::new(joints)?.centered())
}

fn residuals<'a>(p: &'a [[f64; 3]], d2: &'a [f64], n: usize) -> impl Iterator<Item = (usize, usize, f64)> + 'a {
    (0..n).flat_map(move |m| {
        (m + 1..n).map(move |k| {
            let a = &p[m];
            let b = &p[k];
            let r = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2) - d2[m * n + k];
            (m, k, r)
        })
    })
}

/// Smooth surrogate `sum_{m<n} (‖p_m - p_n‖² - d_mn²)²`.
pub fn surrogate(pose: &Pose3D, edm: &DistanceMatrix) -> f64 {
    residuals(&pose.joints, &squared(edm), edm.n()).map(|(_, _, r)| r * r).sum()
}

/// `sum |‖p_m - p_n‖² - d_mn²|` over all ordered pairs.
pub fn eq2_objective(pose: &Pose3D, edm: &DistanceMatrix) -> f64 {
    2.0 * residuals(&pose.joints, &squared(edm), edm.n()).map(|(_, _, r)| r.abs()).sum::<f64>()
}

fn surrogate_grad(p: &[[f64; 3]], d2: &[f64], n: usize) -> (f64, Vec<[f64; 3]>) {
    let mut g = vec![[0.0; 3]; n];
    let mut s = 0.0;
    for (m, k, r) in residuals(p, d2, n) {
        s += r * r;
        for c in 0..3 {
            let v = 4.0 * r * (p[m][c] - p[k][c]);
            g[m][c] += v;
            g[k][c] -= v;
        }
    }
    (s, g)
}

/// Gradient descent with backtracking on the smooth surrogate.
///
/// The returned result carries `Chirality::Original` and zero scores; use
/// [`recover_pose`] for the full procedure.
pub fn refine_stress(init: &Pose3D, edm: &DistanceMatrix, opts: &RecoveryOptions) -> Result<RecoveryResult> {
    opts.validate()?;
    let n = edm.n();
    if init.len() != n {
        return Err(Error::Shape(format!("{} joints for a {n}x{n} matrix", init.len())));
    }
    let d2 = squared(edm);
    let mut p = init.joints.clone();
    let (mut s, mut g) = surrogate_grad(&p, &d2, n);
    if !s.is_finite() {
        return Err(Error::numeric("stress refinement", "non-finite initial objective"));
    }
    let mut history = if opts.keep_history { vec![s] } else { Vec::new() };
    // Initial step from the curvature scale of the quartic.
    let scale2 = d2.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut step = 1.0 / (8.0 * n as f64 * scale2);
    let mut iterations = 0;
    while iterations < opts.max_iterations && s > 0.0 {
        let g2: f64 = g.iter().flatten().map(|v| v * v).sum();
        if g2 == 0.0 {
            break;
        }
        let mut accepted = None;
        while step > 0.0 && step.is_finite() {
            let trial: Vec<[f64; 3]> = p
                .iter()
                .zip(&g)
                .map(|(a, d)| [a[0] - step * d[0], a[1] - step * d[1], a[2] - step * d[2]])
                .collect();
            let (ts, tg) = surrogate_grad(&trial, &d2, n);
            if ts.is_finite() && ts <= s - opts.armijo * step * g2 {
                accepted = Some((trial, ts, tg));
                break;
            }
            step *= opts.shrink;
            if step < 1e-300 {
                break;
            }
        }
        let Some((trial, ts, tg)) = accepted else { break };
        iterations += 1;
        let decrease = (s - ts) / s;
        p = trial;
        s = ts;
        g = tg;
        if opts.keep_history {
            history.push(s);
        }
        if decrease < opts.tolerance {
            break;
        }
        step *= opts.grow;
    }
    let pose = Pose3D::new(p)?.centered();
    Ok(RecoveryResult {
        eq2_objective: eq2_objective(&pose, edm),
        pose,
        iterations,
        chirality: Chirality::Original,
        score_original: 0,
        score_reflected: 0,
        surrogate_history: history,
    })
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Interior angle at a hinge between its two bones, in radians.
pub fn hinge_angle(pose: &Pose3D, hinge: &Hinge) -> Option<f64> {
    let j = &pose.joints[hinge.joint];
    let a = sub(&pose.joints[hinge.parent], j);
    let b = sub(&pose.joints[hinge.child], j);
    if norm(&a) == 0.0 || norm(&b) == 0.0 {
        return None;
    }
    Some(norm(&cross(&a, &b)).atan2(dot(&a, &b)))
}

/// Whether the hinge bends towards its configured side. `None` when the
/// bending plane is degenerate.
fn flexion_ok(pose: &Pose3D, hinge: &Hinge, side: Flexion) -> Option<bool> {
    let (left, right) = hinge.lateral?;
    let j = &pose.joints[hinge.joint];
    let upper = sub(j, &pose.joints[hinge.parent]);
    let lateral = sub(&pose.joints[right], &pose.joints[left]);
    let normal = cross(&upper, &lateral);
    let lower = sub(&pose.joints[hinge.child], j);
    let (nu, nl, nn) = (norm(&upper), norm(&lateral), norm(&normal));
    if nu == 0.0 || nl == 0.0 || nn <= 1e-9 * nu * nl {
        return None;
    }
    let along = dot(&lower, &upper) / (nu * nu);
    let bend = [lower[0] - along * upper[0], lower[1] - along * upper[1], lower[2] - along * upper[2]];
    let s = dot(&bend, &normal);
    Some(match side {
        Flexion::Anterior => s > 0.0,
        Flexion::Posterior => s < 0.0,
    })
}

/// Whether one hinge is within its angle limits and, when configured, bends
/// to the correct side.
pub fn hinge_ok(pose: &Pose3D, hinge: &Hinge) -> bool {
    let Some(theta) = hinge_angle(pose, hinge) else {
        return false;
    };
    if theta < hinge.limits.0 || theta > hinge.limits.1 {
        return false;
    }
    match hinge.flexion {
        Some(side) => flexion_ok(pose, hinge, side).unwrap_or(false),
        None => true,
    }
}

/// Number of joints within the skeleton's hinge limits; joints without a limit
/// count as within.
pub fn anthropomorphism_score(pose: &Pose3D, skeleton: &Skeleton) -> Result<usize> {
    if pose.len() != skeleton.n_joints() {
        return Err(Error::Shape(format!(
            "pose has {} joints, skeleton {}",
            pose.len(),
            skeleton.n_joints()
        )));
    }
    let violations = skeleton.hinges().iter().filter(|h| !hinge_ok(pose, h)).count();
    Ok(pose.len() - violations)
}

/// Classical MDS, refinement, then the more anthropomorphic of the pose and its
/// mirror image (the unmirrored one on ties).
pub fn recover_pose(edm: &DistanceMatrix, skeleton: &Skeleton, opts: &RecoveryOptions) -> Result<RecoveryResult> {
    if edm.n() != skeleton.n_joints() {
        return Err(Error::Shape(format!(
            "{}x{} matrix for a {}-joint skeleton",
            edm.n(),
            edm.n(),
            skeleton.n_joints()
        )));
    }
    recover(edm, Some(skeleton), opts, true)
}

/// Like [`recover_pose`] for a regressor output: an all-zero row is an estimate
/// (the joint predicted on top of every other joint), not missing data.
pub(crate) fn recover_prediction(edm: &DistanceMatrix, skeleton: &Skeleton, opts: &RecoveryOptions) -> Result<RecoveryResult> {
    recover(edm, Some(skeleton), opts, false)
}

/// Recovery without a skeleton: no reflection choice is made.
pub fn recover_points(edm: &DistanceMatrix, opts: &RecoveryOptions) -> Result<RecoveryResult> {
    recover(edm, None, opts, true)
}

fn recover(
    edm: &DistanceMatrix,
    skeleton: Option<&Skeleton>,
    opts: &RecoveryOptions,
    require_complete: bool,
) -> Result<RecoveryResult> {
    if require_complete && edm.n() > 1 {
        if let Some(joint) = edm.first_empty_row() {
            return Err(Error::IncompleteMatrix { joint });
        }
    }
    let init = classical_mds(edm, EMBED_DIM)?;
    let mut res = refine_stress(&init, edm, opts)?;
    if let Some(sk) = skeleton {
        let mirror = res.pose.mirrored();
        res.score_original = anthropomorphism_score(&res.pose, sk)?;
        res.score_reflected = anthropomorphism_score(&mirror, sk)?;
        if res.score_reflected > res.score_original {
            res.pose = mirror;
            res.chirality = Chirality::Reflected;
        }
    }
    Ok(res)
}
