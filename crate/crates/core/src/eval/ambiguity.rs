//! How well distances between 2D poses predict distances between the
//! corresponding 3D poses, for Cartesian and distance-matrix representations.
//!
//! Each representation is unit-Frobenius normalized (Cartesian coordinates are
//! centered first), and the distance between two poses is the Frobenius norm
//! of the difference of their normalized representations.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::edm::{build_edm, Units};
use crate::error::{Error, Result};
use crate::numfmt::{fmt9, ser_f64};
use crate::pose::{Pose2D, Pose3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Cartesian,
    Edm,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Cartesian => "cartesian",
            Representation::Edm => "edm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub i: usize,
    pub j: usize,
    pub d3: f64,
    pub d2: f64,
    pub representation: Representation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityReport {
    pub n_pairs: usize,
    #[serde(serialize_with = "ser_f64")]
    pub pearson_cartesian: f64,
    #[serde(serialize_with = "ser_f64")]
    pub pearson_edm: f64,
    #[serde(skip)]
    pub scatter: Vec<ScatterPoint>,
}

impl AmbiguityReport {
    pub fn scatter_csv(&self) -> String {
        let mut out = String::from("i,j,d3,d2,representation\n");
        for p in &self.scatter {
            out.push_str(&format!("{},{},{},{},{}\n", p.i, p.j, fmt9(p.d3), fmt9(p.d2), p.representation));
        }
        out
    }
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::CorrelationUndefined(format!(
            "need two equally long samples of at least 2 values (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    // Spread at round-off level counts as none.
    let flat = |ss: f64, v: &[f64]| ss.sqrt() <= 1e-12 * n.sqrt() * v.iter().fold(f64::MIN_POSITIVE, |m, a| m.max(a.abs()));
    if flat(sxx, x) || flat(syy, y) {
        return Err(Error::CorrelationUndefined("zero variance".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn unit(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DegeneratePose("representation with zero norm".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

fn cartesian<const D: usize>(pts: &[[f64; D]]) -> Result<Vec<f64>> {
    let n = pts.len().max(1) as f64;
    let mut c = [0.0; D];
    for p in pts {
        for k in 0..D {
            c[k] += p[k] / n;
        }
    }
    unit(pts.iter().flat_map(|p| (0..D).map(move |k| p[k] - c[k])).collect())
}

fn edm_rep<const D: usize>(pts: &[[f64; D]]) -> Result<Vec<f64>> {
    unit(build_edm(pts, Units::Dimensionless)?.values().to_vec())
}

fn frob(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Samples `n_pairs` random pose pairs `(i, j)`, `i != j`, and correlates their
/// 2D and 3D distances under both representations.
pub fn ambiguity_correlation<R: Rng + ?Sized>(
    poses: &[(Pose2D, Pose3D)],
    n_pairs: usize,
    rng: &mut R,
) -> Result<AmbiguityReport> {
    if poses.len() < 2 {
        return Err(Error::InvalidInput("at least 2 poses are needed".into()));
    }
    if n_pairs < 100 {
        return Err(Error::InvalidArgument(format!("{n_pairs} pairs requested, at least 100 needed")));
    }
    let reps = poses
        .iter()
        .map(|(x, y)| {
            Ok((
                cartesian(&x.joints)?,
                cartesian(&y.joints)?,
                edm_rep(&x.joints)?,
                edm_rep(&y.joints)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scatter = Vec::with_capacity(2 * n_pairs);
    let (mut c3, mut c2, mut e3, mut e2) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n_pairs {
        let i = rng.random_range(0..poses.len());
        let mut j = rng.random_range(0..poses.len() - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (&reps[i], &reps[j]);
        let pc = (frob(&a.1, &b.1), frob(&a.0, &b.0));
        let pe = (frob(&a.3, &b.3), frob(&a.2, &b.2));
        c3.push(pc.0);
        c2.push(pc.1);
        e3.push(pe.0);
        e2.push(pe.1);
        scatter.push(ScatterPoint { i, j, d3: pc.0, d2: pc.1, representation: Representation::Cartesian });
        scatter.push(ScatterPoint { i, j, d3: pe.0, d2: pe.1, representation: Representation::Edm });
    }
    // Distances between unit-norm representations live in [0, 2].
    for (name, v) in [("cartesian 3D", &c3), ("cartesian 2D", &c2), ("EDM 3D", &e3), ("EDM 2D", &e2)] {
        if v.iter().all(|d| *d < 1e-12) {
            return Err(Error::CorrelationUndefined(format!("all sampled {name} distances are zero")));
        }
    }
    Ok(AmbiguityReport {
        n_pairs,
        pearson_cartesian: pearson(&c3, &c2)?,
        pearson_edm: pearson(&e3, &e2)?,
        scatter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pearson_of_linear_data_is_one() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &z).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&x, &vec![1.0; 50]), Err(Error::CorrelationUndefined(_))));
    }

    #[test]
    fn rotated_copies_have_identical_edms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base: Vec<[f64; 3]> = (0..14)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let poses: Vec<(Pose2D, Pose3D)> = (0..30)
            .map(|k| {
                let r = Rotation3::from_euler_angles(0.1 * k as f64, 0.3 * k as f64, -0.2 * k as f64);
                let y: Vec<[f64; 3]> = base.iter().map(|p| (r * Vector3::from(*p)).into()).collect();
                let x = Pose2D::raw(y.iter().map(|p| [p[0], p[1]]).collect()).unwrap();
                (x, Pose3D::new(y).unwrap())
            })
            .collect();
        let rep = ambiguity_correlation(&poses, 200, &mut rng);
        // EDM 3D distances are all zero, so the EDM correlation is undefined.
        assert!(matches!(rep, Err(Error::CorrelationUndefined(_))));
        let reps: Vec<_> = poses.iter().map(|(_, y)| (cartesian(&y.joints).unwrap(), edm_rep(&y.joints).unwrap())).collect();
        for w in reps.windows(2) {
            assert!(frob(&w[0].1, &w[1].1) < 1e-12);
            assert!(frob(&w[0].0, &w[1].0) > 1e-3);
        }
    }

    #[test]
    fn csv_has_header_and_two_rows_per_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let poses: Vec<(Pose2D, Pose3D)> = (0..20)
            .map(|_| {
                let y: Vec<[f64; 3]> = (0..14)
                    .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                    .collect();
                (Pose2D::raw(y.iter().map(|p| [p[0], p[1]]).collect()).unwrap(), Pose3D::new(y).unwrap())
            })
            .collect();
        let rep = ambiguity_correlation(&poses, 100, &mut rng).unwrap();
        let csv = rep.scatter_csv();
        assert!(csv.starts_with("i,j,d3,d2,representation\n"));
        assert_eq!(csv.lines().count(), 201);
        assert!(rep.scatter.iter().all(|p| p.i != p.j));
        assert!(ambiguity_correlation(&poses, 99, &mut rng).is_err());
    }
}
