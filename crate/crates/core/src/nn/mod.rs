//! Small CPU network stack: tensors, layers with hand-written backward passes,
//! the two EDM regressors, Adam and checkpoint files.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use layers::{Layer, Mode};
pub use model::{count_params, init_params, mse_loss, Arch, Model, ModelConfig, ModelParams};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use train::{train, train_with_progress, TrainConfig, TrainOutcome, TrainingSample};
