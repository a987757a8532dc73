//! One-class image classification on top of a Vision Transformer feature
//! extractor.
//!
//! Images are mapped by a (mostly frozen) ViT backbone and a trainable
//! projection into a `D`-dimensional, instance-normalized latent space. During
//! training every batch of `B` latent features is paired with `B` samples of
//! zero-centered Gaussian noise acting as pseudo-negatives, and a small
//! classifier head learns to tell the two apart. At test time the head's
//! probability for the noise class is the anomaly score.
//!
//! Module map:
//! - [`numcore`]: tensors, reverse-mode tape, Adam, deterministic RNG,
//!   gradient checking.
//! - [`encoder`]: patch embedding, encoder blocks, latent projection,
//!   checkpoint format.
//! - [`oneclass`]: pseudo-negative sampling, batch assembly, loss, training
//!   loop, scoring.
//! - [`heads`]: FC, KDE and linear-SVM scoring heads.
//! - [`evalproto`]: one-vs-all splits, AUC-ROC, seed aggregation, ablations.
//! - [`gradsuite`]: finite-difference checks of every differentiable op.
//! - [`cliio`]: configuration, dataset readers, synthetic data, commands.

pub mod cliio;
pub mod encoder;
pub mod error;
pub mod evalproto;
pub mod gradsuite;
pub mod heads;
pub mod numcore;
pub mod oneclass;
pub mod par;

pub use error::{Error, Result};
pub use par::Exec;
