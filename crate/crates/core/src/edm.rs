//! Euclidean distance matrices: construction from points, occlusion masking,
//! upper-triangle packing and structural diagnostics.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{ObservedPose2D, MIN_VISIBLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Normalized 2D image coordinates.
    Dimensionless,
    Millimeters,
}

/// Symmetric, zero-diagonal, nonnegative `n x n` matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
    units: Units,
}

impl DistanceMatrix {
    pub fn zeros(n: usize, units: Units) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
            units,
        }
    }

    /// Builds a matrix from row-major values, checking every invariant.
    pub fn from_row_major(n: usize, values: Vec<f64>, units: Units) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Shape(format!(
                "expected {} values for a {n}x{n} matrix, got {}",
                n * n,
                values.len()
            )));
        }
        for m in 0..n {
            if values[m * n + m] != 0.0 {
                return Err(Error::InvalidInput(format!("nonzero diagonal at {m}")));
            }
            for k in 0..n {
                let v = values[m * n + k];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidInput(format!("entry ({m},{k}) = {v}")));
                }
                if v != values[k * n + m] {
                    return Err(Error::InvalidInput(format!("asymmetric at ({m},{k})")));
                }
            }
        }
        Ok(Self { n, values, units })
    }

    /// Symmetrizes `values`, zeroes the diagonal and clamps negatives to zero.
    /// Used to turn raw network output into a valid matrix.
    pub fn from_raw_prediction(n: usize, values: &[f64], units: Units) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                n * n,
                values.len()
            )));
        }
        let mut out = Self::zeros(n, units);
        for m in 0..n {
            for k in m + 1..n {
                let v = 0.5 * (values[m * n + k] + values[k * n + m]);
                if !v.is_finite() {
                    return Err(Error::numeric("prediction", format!("entry ({m},{k}) = {v}")));
                }
                out.set_pair(m, k, v.max(0.0));
            }
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.values[m * self.n + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.n..(m + 1) * self.n]
    }

    fn set_pair(&mut self, m: usize, k: usize, v: f64) {
        self.values[m * self.n + k] = v;
        self.values[k * self.n + m] = v;
    }

    /// Every entry multiplied by `s` (must be nonnegative and finite).
    pub fn scaled(&self, s: f64, units: Units) -> Self {
        Self {
            n: self.n,
            values: self.values.iter().map(|v| v * s).collect(),
            units,
        }
    }

    /// Joint whose row is entirely zero, if any (an unobserved joint).
    pub fn first_empty_row(&self) -> Option<usize> {
        if self.n < 2 {
            return None;
        }
        (0..self.n).find(|&m| self.row(m).iter().all(|&v| v == 0.0))
    }

    pub fn validate(&self) -> EdmReport {
        validate_edm(self.n, &self.values)
    }
}

/// Pairwise Euclidean distances between points of any dimension.
pub fn build_edm<const D: usize>(points: &[[f64; D]], units: Units) -> Result<DistanceMatrix> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no points".into()));
    }
    if points.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    let n = points.len();
    let mut out = DistanceMatrix::zeros(n, units);
    for m in 0..n {
        for k in m + 1..n {
            let d2: f64 = (0..D).map(|c| (points[m][c] - points[k][c]).powi(2)).sum();
            out.set_pair(m, k, d2.sqrt());
        }
    }
    Ok(out)
}

/// Zeroes the row and column of every hidden joint.
pub fn apply_occlusion(edm: &DistanceMatrix, visibility: &[bool]) -> Result<DistanceMatrix> {
    let n = edm.n();
    if visibility.len() != n {
        return Err(Error::Shape(format!(
            "{} visibility flags for a {n}-joint matrix",
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
    let mut out = edm.clone();
    for m in 0..n {
        for k in 0..n {
            if !visibility[m] || !visibility[k] {
                out.values[m * n + k] = 0.0;
            }
        }
    }
    Ok(out)
}

/// Network input for an observation: visible joints are normalized, the
/// pairwise-distance matrix is built and hidden joints' rows are zeroed.
pub fn observation_edm(obs: &ObservedPose2D) -> Result<DistanceMatrix> {
    let normalized = if obs.pose.is_normalized() {
        obs.clone()
    } else {
        obs.normalized()?
    };
    let d = build_edm(&normalized.pose.joints, Units::Dimensionless)?;
    apply_occlusion(&d, &obs.visibility)
}

/// Number of entries above the diagonal of an `n x n` matrix.
pub const fn packed_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Upper-triangle entries in row-major order over `(m, k)` with `m < k`.
pub fn pack_upper(edm: &DistanceMatrix) -> Vec<f64> {
    let n = edm.n();
    let mut out = Vec::with_capacity(packed_len(n));
    for m in 0..n {
        out.extend_from_slice(&edm.row(m)[m + 1..]);
    }
    out
}

/// Inverse of [`pack_upper`]. Negative entries are accepted (and flagged by
/// [`validate_edm`]); non-finite ones are not.
pub fn unpack_upper(packed: &[f64], n: usize, units: Units) -> Result<DistanceMatrix> {
    if packed.len() != packed_len(n) {
        return Err(Error::Shape(format!(
            "packed vector of length {} does not match n = {n} (expected {})",
            packed.len(),
            packed_len(n)
        )));
    }
    if let Some(v) = packed.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite packed entry {v}")));
    }
    let mut out = DistanceMatrix::zeros(n, units);
    let mut it = packed.iter();
    for m in 0..n {
        for k in m + 1..n {
            out.set_pair(m, k, *it.next().expect("length checked"));
        }
    }
    Ok(out)
}

/// Structural diagnostics of a square matrix that is meant to be an EDM.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdmReport {
    /// `max |a_mk - a_km|`.
    pub symmetry_residual: f64,
    pub min_entry: f64,
    pub max_abs_diagonal: f64,
    /// Ordered triples `(i, j, k)`, `i < j`, `k` distinct, with `a_ij > a_ik + a_kj`.
    pub triangle_violations: usize,
    pub gram_min_eigenvalue: f64,
    /// Sum of |negative eigenvalues| over sum of |eigenvalues| of the
    /// double-centered Gram matrix.
    pub gram_negative_mass: f64,
    pub gram_psd: bool,
}

impl EdmReport {
    pub fn is_clean(&self) -> bool {
        self.symmetry_residual == 0.0
            && self.min_entry >= 0.0
            && self.max_abs_diagonal == 0.0
            && self.triangle_violations == 0
            && self.gram_psd
    }
}

/// Relative eigenvalue tolerance for the PSD test.
pub const GRAM_PSD_TOL: f64 = 1e-9;

/// Double-centered Gram matrix `-1/2 J (A o A) J` with `J = I - 11^T / n`.
pub fn gram_from_distances(n: usize, values: &[f64]) -> DMatrix<f64> {
    let sq = DMatrix::from_fn(n, n, |m, k| {
        let v = 0.5 * (values[m * n + k] + values[k * n + m]);
        v * v
    });
    let row_mean: Vec<f64> = (0..n).map(|m| sq.row(m).mean()).collect();
    let col_mean: Vec<f64> = (0..n).map(|k| sq.column(k).mean()).collect();
    let total = sq.mean();
    DMatrix::from_fn(n, n, |m, k| {
        -0.5 * (sq[(m, k)] - row_mean[m] - col_mean[k] + total)
    })
}

pub fn validate_edm(n: usize, values: &[f64]) -> EdmReport {
    assert_eq!(values.len(), n * n, "validate_edm expects a square matrix");
    let at = |m: usize, k: usize| values[m * n + k];
    let mut symmetry_residual: f64 = 0.0;
    let mut min_entry = f64::INFINITY;
    let mut max_abs_diagonal: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for m in 0..n {
        max_abs_diagonal = max_abs_diagonal.max(at(m, m).abs());
        for k in 0..n {
            symmetry_residual = symmetry_residual.max((at(m, k) - at(k, m)).abs());
            min_entry = min_entry.min(at(m, k));
            scale = scale.max(at(m, k).abs());
        }
    }
    let tol = 1e-12 * scale.max(1.0);
    let mut triangle_violations = 0;
    for i in 0..n {
        for j in i + 1..n {
            for k in (0..n).filter(|&k| k != i && k != j) {
                if at(i, j) > at(i, k) + at(k, j) + tol {
                    triangle_violations += 1;
                }
            }
        }
    }

    let (gram_min_eigenvalue, gram_negative_mass, gram_psd) = if n == 0 {
        (0.0, 0.0, true)
    } else {
        let eig = SymmetricEigen::new(gram_from_distances(n, values)).eigenvalues;
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let max_abs = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let total: f64 = eig.iter().map(|v| v.abs()).sum();
        let neg: f64 = eig.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
        let mass = if total > 0.0 { neg / total } else { 0.0 };
        (min, mass, min >= -GRAM_PSD_TOL * max_abs.max(1.0))
    };

    EdmReport {
        symmetry_residual,
        min_entry: if n == 0 { 0.0 } else { min_entry },
        max_abs_diagonal,
        triangle_violations,
        gram_min_eigenvalue,
        gram_negative_mass,
        gram_psd,
    }
}
