//! Pseudo-negative sampling, `2B` batch assembly, the BCE objective, the
//! training loop and anomaly scoring.

mod noise;
mod train;

pub use noise::{assemble_batch, bce_loss, pair_labels, sample_pseudo_negatives, NoiseConfig};
pub use train::{
    anomaly_score, anomaly_scores, streams, train, train_on_features, OneClassModel, StepRecord,
    TrainConfig, TrainHistory,
};
