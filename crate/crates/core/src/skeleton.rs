//! The articulated body model: joint names, the kinematic tree, limb groups and
//! the hinge-limit table used to judge whether a pose is anatomically plausible.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default interior-angle interval (radians) for elbows and knees.
pub const DEFAULT_HINGE_LIMITS: (f64, f64) = (0.10, 3.10);

/// Joint order of the default 14-joint model.
pub const JOINT_NAMES: [&str; 14] = [
    "head",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
];

const DEFAULT_PARENTS: [usize; 14] = [1, 1, 1, 2, 3, 1, 5, 6, 1, 8, 9, 1, 11, 12];

/// Side of the parent-bone plane a hinge is expected to fold towards.
///
/// The plane normal at a hinge `j` with parent `p` is `(j - p) x (right(p) - left(p))`,
/// where `right(p)`/`left(p)` are `p` and its mirrored counterpart. For an upright
/// body facing +z with +x to its right this normal points forwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flexion {
    Anterior,
    Posterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SkeletonFile {
    names: Vec<String>,
    parents: Vec<usize>,
    limb_groups: BTreeMap<String, [usize; 2]>,
    hinge_limits: BTreeMap<String, [f64; 2]>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    hinge_flexion: BTreeMap<String, Flexion>,
}

/// Geometry needed to evaluate one hinge joint.
#[derive(Debug, Clone, PartialEq)]
pub struct Hinge {
    pub joint: usize,
    pub parent: usize,
    pub child: usize,
    pub limits: (f64, f64),
    /// `(left, right)` joints spanning the lateral axis at the parent, when the
    /// parent has a mirrored counterpart.
    pub lateral: Option<(usize, usize)>,
    pub flexion: Option<Flexion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<usize>,
    limb_groups: BTreeMap<String, [usize; 2]>,
    hinge_limits: BTreeMap<String, (f64, f64)>,
    hinge_flexion: BTreeMap<String, Flexion>,
    hinges: Vec<Hinge>,
}

impl Default for Skeleton {
    fn default() -> Self {
        Self::default_14()
    }
}

impl Skeleton {
    /// The 14-joint model: head, neck, shoulders, elbows, wrists, hips, knees, ankles.
    /// The neck is the root.
    pub fn default_14() -> Self {
        let names = JOINT_NAMES.iter().map(|s| s.to_string()).collect();
        let limb_groups = [
            ("right_arm", [3, 4]),
            ("left_arm", [6, 7]),
            ("right_leg", [9, 10]),
            ("left_leg", [12, 13]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let hinge_limits = ["right_elbow", "left_elbow", "right_knee", "left_knee"]
            .into_iter()
            .map(|k| (k.to_string(), DEFAULT_HINGE_LIMITS))
            .collect();
        let hinge_flexion = [
            ("right_elbow", Flexion::Anterior),
            ("left_elbow", Flexion::Anterior),
            ("right_knee", Flexion::Posterior),
            ("left_knee", Flexion::Posterior),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self::new(
            names,
            DEFAULT_PARENTS.to_vec(),
            limb_groups,
            hinge_limits,
            hinge_flexion,
        )
        .expect("default skeleton is valid")
    }

    pub fn new(
        names: Vec<String>,
        parents: Vec<usize>,
        limb_groups: BTreeMap<String, [usize; 2]>,
        hinge_limits: BTreeMap<String, (f64, f64)>,
        hinge_flexion: BTreeMap<String, Flexion>,
    ) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::Skeleton("no joints".into()));
        }
        if parents.len() != n {
            return Err(Error::Skeleton(format!(
                "{} names but {} parents",
                n,
                parents.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::Skeleton(format!("duplicate joint name `{name}`")));
            }
        }
        if let Some((j, &p)) = parents.iter().enumerate().find(|(_, &p)| p >= n) {
            return Err(Error::Skeleton(format!("joint {j} has parent {p} out of range")));
        }
        let roots: Vec<usize> = (0..n).filter(|&j| parents[j] == j).collect();
        if roots.len() != 1 {
            return Err(Error::Skeleton(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        // Every joint must reach the root without revisiting a joint.
        for start in 0..n {
            let mut j = start;
            for _ in 0..n {
                if parents[j] == j {
                    break;
                }
                j = parents[j];
            }
            if parents[j] != j {
                return Err(Error::Skeleton(format!("joint {start} is on a cycle")));
            }
        }
        for (group, [a, b]) in &limb_groups {
            if *a >= n || *b >= n || a == b {
                return Err(Error::Skeleton(format!(
                    "limb group `{group}` must name 2 distinct joints"
                )));
            }
        }

        let index = |name: &str| names.iter().position(|s| s == name);
        let mut hinges = Vec::new();
        for (name, &(lo, hi)) in &hinge_limits {
            let joint = index(name)
                .ok_or_else(|| Error::Skeleton(format!("hinge limit for unknown joint `{name}`")))?;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Skeleton(format!("invalid limits for `{name}`")));
            }
            let parent = parents[joint];
            let children: Vec<usize> = (0..n)
                .filter(|&c| c != joint && parents[c] == joint)
                .collect();
            if parent == joint || children.len() != 1 {
                return Err(Error::Skeleton(format!(
                    "hinge `{name}` needs a parent and exactly one child"
                )));
            }
            let lateral = mirror_name(&names[parent])
                .and_then(|m| index(&m))
                .map(|other| {
                    if names[parent].starts_with("right_") {
                        (other, parent)
                    } else {
                        (parent, other)
                    }
                });
            hinges.push(Hinge {
                joint,
                parent,
                child: children[0],
                limits: (lo, hi),
                lateral,
                flexion: hinge_flexion.get(name).copied(),
            });
        }
        for name in hinge_flexion.keys() {
            if !hinge_limits.contains_key(name) {
                return Err(Error::Skeleton(format!(
                    "flexion given for `{name}` without hinge limits"
                )));
            }
        }
        hinges.sort_by_key(|h| h.joint);

        Ok(Self {
            names,
            parents,
            limb_groups,
            hinge_limits,
            hinge_flexion,
            hinges,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: SkeletonFile = serde_json::from_str(s)?;
        Self::new(
            file.names,
            file.parents,
            file.limb_groups,
            file.hinge_limits
                .into_iter()
                .map(|(k, [lo, hi])| (k, (lo, hi)))
                .collect(),
            file.hinge_flexion,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = SkeletonFile {
            names: self.names.clone(),
            parents: self.parents.clone(),
            limb_groups: self.limb_groups.clone(),
            hinge_limits: self
                .hinge_limits
                .iter()
                .map(|(k, &(lo, hi))| (k.clone(), [lo, hi]))
                .collect(),
            hinge_flexion: self.hinge_flexion.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn n_joints(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn root(&self) -> usize {
        (0..self.n_joints())
            .find(|&j| self.parents[j] == j)
            .expect("validated at construction")
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|s| s == name)
    }

    pub fn limb_groups(&self) -> &BTreeMap<String, [usize; 2]> {
        &self.limb_groups
    }

    pub fn limb_group(&self, name: &str) -> Option<[usize; 2]> {
        self.limb_groups.get(name).copied()
    }

    pub fn hinge_limits(&self) -> &BTreeMap<String, (f64, f64)> {
        &self.hinge_limits
    }

    pub fn hinges(&self) -> &[Hinge] {
        &self.hinges
    }

    /// Bones as `(parent, child)` pairs, excluding the root's self-link.
    pub fn bones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter(|(j, p)| *j != **p)
            .map(|(j, &p)| (p, j))
    }
}

fn mirror_name(name: &str) -> Option<String> {
    if let Some(rest) = name.strip_prefix("right_") {
        Some(format!("left_{rest}"))
    } else {
        name.strip_prefix("left_").map(|rest| format!("right_{rest}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_is_a_tree_rooted_at_neck() {
        let s = Skeleton::default_14();
        assert_eq!(s.n_joints(), 14);
        assert_eq!(s.root(), 1);
        assert_eq!(s.bones().count(), 13);
        assert_eq!(s.limb_group("right_arm"), Some([3, 4]));
        assert_eq!(s.limb_group("left_leg"), Some([12, 13]));
        assert_eq!(s.hinges().len(), 4);
        let knee = s.hinges().iter().find(|h| h.joint == 9).unwrap();
        assert_eq!((knee.parent, knee.child), (8, 10));
        assert_eq!(knee.lateral, Some((11, 8)));
        assert_eq!(knee.flexion, Some(Flexion::Posterior));
    }

    #[test]
    fn json_round_trip() {
        let s = Skeleton::default_14();
        let json = s.to_json_string().unwrap();
        assert_eq!(Skeleton::from_json_str(&json).unwrap(), s);
    }

    #[test]
    fn accepts_file_without_flexion_table() {
        let json = r#"{
            "names": ["a","b","c","d"],
            "parents": [0,0,1,2],
            "limb_groups": {"tail": [2,3]},
            "hinge_limits": {"b": [0.1, 3.1]}
        }"#;
        let s = Skeleton::from_json_str(json).unwrap();
        assert_eq!(s.hinges()[0].flexion, None);
        assert_eq!(s.hinges()[0].lateral, None);
    }

    #[test]
    fn rejects_invalid_definitions() {
        let bad = [
            // duplicate name
            r#"{"names":["a","a"],"parents":[0,0],"limb_groups":{},"hinge_limits":{}}"#,
            // two roots
            r#"{"names":["a","b"],"parents":[0,1],"limb_groups":{},"hinge_limits":{}}"#,
            // cycle
            r#"{"names":["r","a","b"],"parents":[0,2,1],"limb_groups":{},"hinge_limits":{}}"#,
            // limb group with repeated joint
            r#"{"names":["a","b"],"parents":[0,0],"limb_groups":{"x":[1,1]},"hinge_limits":{}}"#,
            // hinge on a leaf
            r#"{"names":["a","b"],"parents":[0,0],"limb_groups":{},"hinge_limits":{"b":[0,1]}}"#,
        ];
        for json in bad {
            assert!(Skeleton::from_json_str(json).is_err(), "{json}");
        }
    }
}
