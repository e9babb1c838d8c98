//! Episodic training: episodes, losses, Adam, and the training loop.

mod episode;
mod loss;
mod optim;
mod trainer;

pub use episode::{sample_balanced_negatives, sample_episode, Episode};
pub use loss::{batch_loss, cross_entropy, loss_fs, loss_os, loss_total, BatchLoss, OsMean, OsTerm};
pub use optim::{Adam, AdamConfig};
pub use trainer::{
    discriminator_params, reports_csv, step_rng, train_loop, train_step, TrainConfig, TrainReport, Trainer,
    REPORT_HEADER,
};
