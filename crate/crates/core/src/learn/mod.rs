//! Losses, optimizer and training loop.

mod adam;
mod loss;
mod metrics;
mod train;

pub use adam::{Adam, AdamConfig};
pub use loss::{loss, loss_dce, loss_nll, loss_nllp, LossKind};
pub use metrics::{match_counts, MatchCounts};
pub use train::{epoch_order, evaluate_matching, train, train_step, EpochRecord, TrainConfig, TrainState, TrainingPair};
