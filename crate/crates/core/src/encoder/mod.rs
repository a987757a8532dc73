//! ViT feature extractor: patch embedding, token construction, pre-norm
//! encoder blocks, CLS extraction, trainable latent projection and instance
//! normalization.

mod checkpoint;
mod config;
mod vit;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, validate_against,
};
pub use config::{names, EncoderConfig, Init, INIT_STD};
pub(crate) use config::init_tensor;
pub use vit::{
    backbone_features, backbone_on_tape, build_tokens, encode_on_tape, encoder_block,
    encoder_block_on_tape, extract_latent, extract_patches, freeze_backbone, patchify,
    project_features, project_on_tape, LatentBatch,
};
