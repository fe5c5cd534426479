//! Aggregated error reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::{ser_f64, ser_opt_f64, ser_vec_f64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: String,
    pub n_samples: usize,
    pub aligned: bool,
    /// Mean of the per-joint means, in mm.
    #[serde(serialize_with = "ser_f64")]
    pub mpjpe: f64,
    pub joint_names: Vec<String>,
    #[serde(serialize_with = "ser_vec_f64")]
    pub per_joint: Vec<f64>,
    /// Mean error over hidden joint instances.
    #[serde(serialize_with = "ser_opt_f64")]
    pub occluded_mpjpe: Option<f64>,
    /// Mean error over visible joint instances.
    #[serde(serialize_with = "ser_opt_f64")]
    pub visible_mpjpe: Option<f64>,
    /// Error of the mean-pose predictor on the same samples.
    #[serde(serialize_with = "ser_opt_f64")]
    pub baseline_mpjpe: Option<f64>,
    #[serde(serialize_with = "ser_opt_f64")]
    pub mean_eq2_objective: Option<f64>,
}

/// Accumulates per-joint errors sample by sample.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    joint_sum: Vec<f64>,
    joint_count: Vec<usize>,
    occluded: (f64, usize),
    visible: (f64, usize),
    n_samples: usize,
    any_occlusion: bool,
}

impl MetricsAccumulator {
    pub fn new(n_joints: usize) -> Self {
        Self {
            joint_sum: vec![0.0; n_joints],
            joint_count: vec![0; n_joints],
            occluded: (0.0, 0),
            visible: (0.0, 0),
            n_samples: 0,
            any_occlusion: false,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Adds one sample's joint errors; `visibility` marks which joints the
    /// network saw.
    pub fn add(&mut self, errors: &[f64], visibility: Option<&[bool]>) -> Result<()> {
        if errors.len() != self.joint_sum.len() {
            return Err(Error::Shape(format!(
                "{} errors for {} joints",
                errors.len(),
                self.joint_sum.len()
            )));
        }
        if let Some(v) = visibility {
            if v.len() != errors.len() {
                return Err(Error::Shape(format!("{} flags for {} joints", v.len(), errors.len())));
            }
        }
        for (j, &e) in errors.iter().enumerate() {
            self.joint_sum[j] += e;
            self.joint_count[j] += 1;
            let seen = visibility.is_none_or(|v| v[j]);
            let bucket = if seen { &mut self.visible } else { &mut self.occluded };
            bucket.0 += e;
            bucket.1 += 1;
            self.any_occlusion |= !seen;
        }
        self.n_samples += 1;
        Ok(())
    }

    pub fn finish(&self, protocol: &str, joint_names: &[String], aligned: bool) -> Result<MetricsReport> {
        if self.n_samples == 0 {
            return Err(Error::EmptyDataset);
        }
        let per_joint: Vec<f64> = self
            .joint_sum
            .iter()
            .zip(&self.joint_count)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let mean = |(s, c): (f64, usize)| (c > 0).then(|| s / c as f64);
        Ok(MetricsReport {
            protocol: protocol.to_string(),
            n_samples: self.n_samples,
            aligned,
            mpjpe: per_joint.iter().sum::<f64>() / per_joint.len() as f64,
            joint_names: joint_names.to_vec(),
            per_joint,
            occluded_mpjpe: if self.any_occlusion { mean(self.occluded) } else { None },
            visible_mpjpe: mean(self.visible),
            baseline_mpjpe: None,
            mean_eq2_objective: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overall_is_mean_of_joint_means() {
        let mut acc = MetricsAccumulator::new(3);
        acc.add(&[1.0, 2.0, 3.0], None).unwrap();
        acc.add(&[3.0, 2.0, 1.0], Some(&[true, false, true])).unwrap();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = acc.finish("clean", &names, true).unwrap();
        assert_eq!(r.per_joint, vec![2.0, 2.0, 2.0]);
        assert_eq!(r.mpjpe, 2.0);
        assert_eq!(r.occluded_mpjpe, Some(2.0));
        assert_eq!(r.visible_mpjpe, Some(2.0));
        assert!(acc.add(&[1.0], None).is_err());
    }

    #[test]
    fn no_occlusion_means_no_occluded_error() {
        let mut acc = MetricsAccumulator::new(2);
        acc.add(&[1.0, 3.0], None).unwrap();
        let r = acc.finish("clean", &["a".into(), "b".into()], true).unwrap();
        assert_eq!(r.occluded_mpjpe, None);
        assert!(MetricsAccumulator::new(2).finish("clean", &[], true).is_err());
    }
}
