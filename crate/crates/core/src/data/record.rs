//! JSON Lines dataset and prediction files.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mds::Chirality;
use crate::numfmt::{ser_opt_f64, ser_points};
use crate::pose::{ObservedPose2D, Pose2D, Pose3D, MIN_VISIBLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// One annotated frame: 2D pixels, 3D millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    #[serde(serialize_with = "ser_points")]
    pub joints2d: Vec<[f64; 2]>,
    #[serde(serialize_with = "ser_points")]
    pub joints3d: Vec<[f64; 3]>,
    pub visibility: Vec<bool>,
    pub split: Split,
}

/// Span of a plausible body in millimeters.
const BODY_SPAN_MM: (f64, f64) = (100.0, 10_000.0);

fn check_len(field: &str, got: usize, want: usize) -> std::result::Result<(), String> {
    if got != want {
        return Err(format!("field `{field}` has {got} entries, expected {want}"));
    }
    Ok(())
}

fn check_mm(joints3d: &[[f64; 3]]) -> std::result::Result<(), String> {
    if joints3d.iter().flatten().any(|v| !v.is_finite()) {
        return Err("field `joints3d` has a non-finite coordinate".into());
    }
    let span = Pose3D { joints: joints3d.to_vec() }.diameter();
    if span < BODY_SPAN_MM.0 || span > BODY_SPAN_MM.1 {
        return Err(format!(
            "field `joints3d` spans {span} units; expected a body in millimeters ({}..{})",
            BODY_SPAN_MM.0, BODY_SPAN_MM.1
        ));
    }
    Ok(())
}

impl DatasetRecord {
    pub fn validate(&self, n_joints: usize) -> std::result::Result<(), String> {
        check_len("joints2d", self.joints2d.len(), n_joints)?;
        check_len("joints3d", self.joints3d.len(), n_joints)?;
        check_len("visibility", self.visibility.len(), n_joints)?;
        if self.joints2d.iter().flatten().any(|v| !v.is_finite()) {
            return Err("field `joints2d` has a non-finite coordinate".into());
        }
        check_mm(&self.joints3d)?;
        let visible = self.visibility.iter().filter(|v| **v).count();
        if visible < MIN_VISIBLE {
            return Err(format!("field `visibility` marks {visible} joints visible, at least {MIN_VISIBLE} needed"));
        }
        Ok(())
    }

    pub fn pose3d(&self) -> Pose3D {
        Pose3D { joints: self.joints3d.clone() }
    }

    pub fn observation(&self) -> Result<ObservedPose2D> {
        ObservedPose2D::new(Pose2D::raw(self.joints2d.clone())?, self.visibility.clone())
    }
}

/// A recovered pose written by prediction. Dataset records also parse as
/// predictions, using their ground-truth joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    #[serde(serialize_with = "ser_points")]
    pub joints3d: Vec<[f64; 3]>,
    /// Joints the network saw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<Vec<bool>>,
    #[serde(default, serialize_with = "ser_opt_f64", skip_serializing_if = "Option::is_none")]
    pub eq2_objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirality: Option<Chirality>,
}

impl PredictionRecord {
    pub fn validate(&self, n_joints: usize) -> std::result::Result<(), String> {
        check_len("joints3d", self.joints3d.len(), n_joints)?;
        if let Some(v) = &self.visibility {
            check_len("visibility", v.len(), n_joints)?;
        }
        if self.joints3d.iter().flatten().any(|v| !v.is_finite()) {
            return Err("field `joints3d` has a non-finite coordinate".into());
        }
        Ok(())
    }

    pub fn pose3d(&self) -> Pose3D {
        Pose3D { joints: self.joints3d.clone() }
    }
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_lines<T: for<'de> Deserialize<'de>>(
    path: &Path,
    mut check: impl FnMut(&T) -> std::result::Result<(), String>,
) -> Result<Vec<T>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let rec: T = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        check(&rec).map_err(err)?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Reads and validates a dataset, reporting the first bad line.
pub fn read_dataset(path: impl AsRef<Path>, n_joints: usize) -> Result<Vec<DatasetRecord>> {
    read_lines(path.as_ref(), |r: &DatasetRecord| r.validate(n_joints))
}

pub fn read_predictions(path: impl AsRef<Path>, n_joints: usize) -> Result<Vec<PredictionRecord>> {
    read_lines(path.as_ref(), |r: &PredictionRecord| r.validate(n_joints))
}
