//! Losses, gradients, optimizer and the training loop.

mod grad;
mod loss;
mod optim;
mod trainer;

pub use grad::{batch_loss, compute_gradients, grad_check, relative_error, GradCheckReport, TensorCheck};
pub use loss::{loss_group, loss_llm, LossBreakdown, LossWeights, MaskedMean};
pub use optim::{adamw_update, grad_norm, OptimizerState, TrainConfig};
pub use trainer::{jsonl_logger, train, train_step, BatchSampler, StepRecord, TrainOutcome};

#[cfg(test)]
mod tests;
