//! Configuration, dataset ingestion, synthetic data and command entry points.

mod commands;
mod config;
pub mod csv;
mod ingest;
mod resize;
mod synthetic;

pub use commands::{
    cmd_ablate, cmd_eval, cmd_gradcheck, cmd_score, cmd_train, layout, load_dataset, load_model, read_image,
    splits_for, Overrides, TrainedRun,
};
pub use config::{DatasetSource, ExperimentConfig, KeyValues};
pub use ingest::{read_cifar_bin, read_idx, read_idx_images, read_idx_labels, CifarVariant};
pub use resize::{fit_to_encoder, replicate_channels, resize_nearest};
pub use synthetic::{gen_synthetic, SyntheticSpec, INLIER, OUTLIER};
