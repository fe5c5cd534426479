//! Lifting 2D human poses to 3D through Euclidean distance matrix (EDM) regression.
//!
//! The pipeline has four stages, each in its own module:
//!
//! * [`pose`], [`skeleton`] and [`edm`]: joint containers, the 14-joint body model,
//!   distance-matrix construction, 2D normalization and occlusion masking.
//! * [`nn`]: a small CPU tensor/layer stack with reverse-mode gradients, the fully
//!   connected (`fconn`) and fully convolutional (`fconv`) regressors, Adam training
//!   and checkpoint I/O.
//! * [`mds`]: recovery of 3D joints from a predicted EDM (classical MDS followed by
//!   squared-residual descent) and reflection disambiguation.
//! * [`eval`]: rigid alignment, MPJPE, noise/occlusion protocols and the
//!   representation-ambiguity analysis.
//!
//! [`data`], [`pipeline`], [`plot`] and [`cli`] tie these together into dataset
//! generation, prediction and reporting.

pub mod cli;
pub mod data;
pub mod edm;
pub mod error;
pub mod eval;
pub mod mds;
pub mod nn;
pub mod numfmt;
pub mod pipeline;
pub mod plot;
pub mod pose;
pub mod skeleton;

pub use edm::{build_edm, DistanceMatrix, EdmReport, Units};
pub use error::{Error, Result};
pub use pose::{ObservedPose2D, Pose2D, Pose3D};
pub use skeleton::Skeleton;

/// Number of joints in the default body model.
pub const N_JOINTS: usize = 14;
