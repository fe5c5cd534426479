//! Dataset files, cameras and the synthetic pose generator.

pub mod camera;
pub mod record;
pub mod synth;

pub use camera::{project_camera, CameraModel};
pub use record::{read_dataset, read_predictions, write_jsonl, DatasetRecord, PredictionRecord, Split};
pub use synth::{synth_dataset, SynthConfig};
