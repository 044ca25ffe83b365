//! Contrastive training of the energy model and regression training of the
//! explicit baseline.

mod dataset;
mod infonce;
mod steps;
mod trainer;

pub use dataset::{Batch, Dataset};
pub use infonce::{infonce_loss, InfoNce};
pub use steps::{
    ibc_loss_and_grads, ibc_train_step, mse_loss_and_grads, mse_train_step, StepReport,
};
pub use trainer::{log_to_csv, train, write_log, LogRow, TrainConfig, TrainOutcome, Trainer, LOG_HEADER};
