//! Training, evaluation, checkpoints and the pooling baseline.

mod adam;
mod baseline;
mod checkpoint;
mod config;
mod pipeline;
mod train;

pub use adam::{Adam, AdamConfig};
pub use baseline::AvgPoolBaseline;
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use pipeline::{BagForward, BagLoss, Head, Mode, Pipeline, Target};
pub use train::{
    evaluate, evaluate_pipeline, predict_split, report_from_predictions, target_for, train, EpochLog, Prediction,
    Trainer,
};
