//! Loss terms, synthetic conflict data, the optimizer, the training loop
//! and gradient verification of the full objective.

mod dataset;
mod gradcheck;
mod losses;
mod optim;
mod train;

pub use dataset::{gen_synthetic_dataset, DatasetOptions, TrainingExample};
pub use gradcheck::{check_model_gradients, GradCheckRun};
pub use losses::{
    attention_pool, loss_aux, loss_cls, loss_lm, loss_sft, record_losses, total_loss, LossParts,
    LossVars, LossWeights,
};
pub use optim::AdamW;
pub use train::{
    evaluate, example_grad, record_example, train, Evaluation, ExampleGrad, StepRecord,
    TrainConfig, TrainOutcome,
};

use thiserror::Error;

use crate::moe::MoeError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training setup: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Model(#[from] MoeError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
