//! Alignment, error metrics, perturbation protocols and the representation
//! ambiguity analysis.

pub mod align;
pub mod ambiguity;
pub mod metrics;
pub mod protocol;

pub use align::{joint_errors, mpjpe, procrustes_align, AlignOptions, AlignmentResult};
pub use ambiguity::{ambiguity_correlation, pearson, AmbiguityReport, Representation, ScatterPoint};
pub use metrics::{MetricsAccumulator, MetricsReport};
pub use protocol::{inject_noise, make_occlusion_mask, MaskKind, ProtocolKind, ProtocolSpec};
