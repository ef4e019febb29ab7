//! Adamax, the epoch learning-rate schedule and the mini-batch loop.

mod optim;
mod train;

pub use optim::{adamax_update, lr_multiplier, Adamax, AdamaxConfig, ScheduleConfig};
pub use train::{
    batch_loss, evaluate, predict, predict_examples, seeded_rng, train, EpochRecord, TrainConfig,
    TrainLog, CSV_HEADER, INIT_STREAM, SHUFFLE_STREAM,
};
