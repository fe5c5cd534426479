//! End-to-end lifting: training pairs from records, network prediction followed
//! by recovery, the mean-pose baseline and metric reports.

use std::collections::HashMap;

use crate::data::{DatasetRecord, PredictionRecord, Split};
use crate::edm::{build_edm, observation_edm, DistanceMatrix, Units};
use crate::error::{Error, Result};
use crate::eval::{joint_errors, MetricsAccumulator, MetricsReport, ProtocolSpec};
use crate::mds::{recover_pose, recover_prediction, RecoveryOptions, RecoveryResult};
use crate::nn::{Checkpoint, Model, TrainingSample};
use crate::pose::{ObservedPose2D, Pose3D};
use crate::skeleton::Skeleton;

/// Records of one split, or all of them for `None`.
pub fn select_split(records: &[DatasetRecord], split: Option<Split>) -> Vec<&DatasetRecord> {
    records.iter().filter(|r| split.is_none_or(|s| r.split == s)).collect()
}

/// `(normalized 2D EDM, 3D EDM in mm)` pairs.
pub fn training_samples<'a>(records: impl IntoIterator<Item = &'a DatasetRecord>) -> Result<Vec<TrainingSample>> {
    records
        .into_iter()
        .map(|r| {
            let target = build_edm(&r.joints3d, Units::Millimeters)?;
            TrainingSample::from_observation(r.observation()?, target)
        })
        .collect()
}

/// Element-wise mean of the 3D EDMs of `records`.
pub fn mean_edm<'a>(records: impl IntoIterator<Item = &'a DatasetRecord>) -> Result<DistanceMatrix> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    let mut size = 0;
    for r in records {
        let d = build_edm(&r.joints3d, Units::Millimeters)?;
        if sum.is_empty() {
            size = d.n();
            sum = vec![0.0; size * size];
        } else if d.n() != size {
            return Err(Error::Shape(format!("record `{}` has {} joints, expected {size}", r.id, d.n())));
        }
        sum.iter_mut().zip(d.values()).for_each(|(s, v)| *s += v);
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    DistanceMatrix::from_row_major(size, sum.into_iter().map(|s| s / n as f64).collect(), Units::Millimeters)
}

/// The mean-pose predictor: recovery of the mean training EDM.
pub fn mean_pose_baseline<'a>(
    train: impl IntoIterator<Item = &'a DatasetRecord>,
    skeleton: &Skeleton,
) -> Result<Pose3D> {
    Ok(recover_pose(&mean_edm(train)?, skeleton, &RecoveryOptions::default())?.pose)
}

/// A trained regressor followed by 3D recovery.
#[derive(Debug, Clone)]
pub struct Lifter {
    model: Model<f32>,
    output_scale: f64,
    pub skeleton: Skeleton,
    pub recovery: RecoveryOptions,
    /// Inputs per network call.
    pub batch_size: usize,
}

impl Lifter {
    pub fn new(checkpoint: &Checkpoint, skeleton: Skeleton) -> Result<Self> {
        if checkpoint.config.n_joints != skeleton.n_joints() {
            return Err(Error::Shape(format!(
                "checkpoint expects {} joints, skeleton has {}",
                checkpoint.config.n_joints,
                skeleton.n_joints()
            )));
        }
        Ok(Self {
            model: checkpoint.model()?,
            output_scale: checkpoint.output_scale,
            skeleton,
            recovery: RecoveryOptions::default(),
            batch_size: 256,
        })
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    /// Predicted 3D EDMs (mm) for already-built input EDMs.
    pub fn predict_edms(&self, inputs: &[DistanceMatrix]) -> Result<Vec<DistanceMatrix>> {
        let cfg = *self.model.config();
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(self.batch_size.max(1)) {
            let x = self.model.batch_input(&chunk.iter().collect::<Vec<_>>())?;
            let y = self.model.infer(&x)?;
            for item in y.to_f64_vec().chunks(y.item_len()) {
                out.push(cfg.decode_output(item, self.output_scale, Units::Millimeters)?);
            }
        }
        Ok(out)
    }

    pub fn predict_edm(&self, obs: &ObservedPose2D) -> Result<DistanceMatrix> {
        Ok(self.predict_edms(&[observation_edm(obs)?])?.remove(0))
    }

    /// Lifts a batch of raw observations to 3D.
    pub fn lift_all(&self, observations: &[ObservedPose2D]) -> Result<Vec<RecoveryResult>> {
        let inputs = observations.iter().map(observation_edm).collect::<Result<Vec<_>>>()?;
        self.predict_edms(&inputs)?
            .iter()
            .map(|d| recover_prediction(d, &self.skeleton, &self.recovery))
            .collect()
    }

    pub fn lift(&self, obs: &ObservedPose2D) -> Result<RecoveryResult> {
        Ok(self.lift_all(std::slice::from_ref(obs))?.remove(0))
    }

    /// Predictions for `records` after perturbing each input with `protocol`.
    pub fn predict_records(&self, records: &[&DatasetRecord], protocol: &ProtocolSpec) -> Result<Vec<PredictionRecord>> {
        let observations = records
            .iter()
            .enumerate()
            .map(|(i, r)| protocol.apply(&r.observation()?, &self.skeleton, i as u64))
            .collect::<Result<Vec<_>>>()?;
        let results = self.lift_all(&observations)?;
        Ok(records
            .iter()
            .zip(observations)
            .zip(results)
            .map(|((r, obs), res)| PredictionRecord {
                id: r.id.clone(),
                joints3d: res.pose.joints,
                visibility: Some(obs.visibility),
                eq2_objective: Some(res.eq2_objective),
                chirality: Some(res.chirality),
            })
            .collect())
    }
}

/// Scores predictions against ground truth matched by id. The baseline is the
/// mean-pose predictor built from the ground truth's training split, when present.
pub fn evaluate_predictions(
    preds: &[PredictionRecord],
    gt: &[DatasetRecord],
    protocol: &str,
    skeleton: &Skeleton,
) -> Result<MetricsReport> {
    let by_id: HashMap<&str, &DatasetRecord> = gt.iter().map(|r| (r.id.as_str(), r)).collect();
    let n = skeleton.n_joints();
    let mut acc = MetricsAccumulator::new(n);
    let mut matched = Vec::with_capacity(preds.len());
    let mut eq2 = (0.0, 0usize);
    for p in preds {
        let g = by_id
            .get(p.id.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("prediction `{}` has no ground-truth record", p.id)))?;
        let errs = joint_errors(&p.pose3d(), &g.pose3d(), true)?;
        acc.add(&errs, p.visibility.as_deref())?;
        if let Some(v) = p.eq2_objective {
            eq2.0 += v;
            eq2.1 += 1;
        }
        matched.push(*g);
    }
    let mut report = acc.finish(protocol, skeleton.names(), true)?;
    let train = select_split(gt, Some(Split::Train));
    if !train.is_empty() {
        let base = mean_pose_baseline(train, skeleton)?;
        let mut bacc = MetricsAccumulator::new(n);
        for g in &matched {
            bacc.add(&joint_errors(&base, &g.pose3d(), true)?, None)?;
        }
        report.baseline_mpjpe = Some(bacc.finish(protocol, skeleton.names(), true)?.mpjpe);
    }
    report.mean_eq2_objective = (eq2.1 > 0).then(|| eq2.0 / eq2.1 as f64);
    Ok(report)
}
