use super::noise::{check_pairing, pair_labels, sample_pseudo_negatives, NoiseConfig};
use crate::encoder::{self, names, EncoderConfig, LatentBatch};
use crate::error::{Error, Result};
use crate::heads::{AnomalyScorer, FcHead, FcScorer};
use crate::numcore::{adam_step, AdamConfig, ParamStore, Rng, Tape, Tensor};
use crate::par::Exec;

/// Independent random streams derived from a run seed.
pub mod streams {
    pub const ENCODER_INIT: u64 = 0;
    pub const HEAD_INIT: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const SVM_NOISE: u64 = 4;
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub noise: NoiseConfig,
}

impl TrainConfig {
    pub fn new(latent_dim: usize) -> Self {
        Self {
            batch_size: 64,
            epochs: 10,
            lr: 1e-3,
            weight_decay: 1e-4,
            seed: 0,
            noise: NoiseConfig::new(latent_dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.epochs < 1 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::config(format!(
                "invalid optimizer settings lr={} weight_decay={}",
                self.lr, self.weight_decay
            )));
        }
        self.noise.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epoch_loss: Vec<f64>,
    /// Fraction of the `2B` rows per step classified correctly, per epoch.
    pub epoch_accuracy: Vec<f64>,
}

/// Extractor + FC head with all parameters in one store (`encoder.*`,
/// `head.*`).
#[derive(Clone, Debug, PartialEq)]
pub struct OneClassModel {
    pub encoder: EncoderConfig,
    pub head: FcHead,
    pub params: ParamStore,
}

impl OneClassModel {
    /// Fresh parameters drawn from the seed's encoder and head streams, with
    /// the backbone frozen.
    pub fn init(encoder: EncoderConfig, head_depth: usize, seed: u64) -> Result<Self> {
        let root = Rng::new(seed);
        let head = FcHead::new(encoder.latent_dim, head_depth)?;
        let mut params = encoder.init_params(&mut root.split(streams::ENCODER_INIT))?;
        params.extend_from(head.init_params(&mut root.split(streams::HEAD_INIT)));
        encoder::freeze_backbone(&mut params);
        Ok(Self {
            encoder,
            head,
            params,
        })
    }

    /// Rebuilds a model around loaded parameters, checking names and shapes.
    pub fn from_params(encoder: EncoderConfig, head_depth: usize, params: ParamStore) -> Result<Self> {
        let mut template = Self::init(encoder, head_depth, 0)?;
        encoder::validate_against(&params, &template.params)?;
        for (name, t) in params.iter() {
            *template.params.get_mut(name).expect("validated") = t.clone();
        }
        Ok(template)
    }

    pub fn scorer(&self) -> FcScorer<'_> {
        FcScorer {
            head: &self.head,
            params: &self.params,
        }
    }

    pub fn backbone_features(&self, images: &[Tensor], exec: Exec) -> Result<Tensor> {
        encoder::backbone_features(&self.params, &self.encoder, images, exec)
    }

    pub fn latent(&self, images: &[Tensor], exec: Exec) -> Result<LatentBatch> {
        encoder::extract_latent(images, &self.encoder, &self.params, exec)
    }

    pub fn latent_from_features(&self, feats: &Tensor) -> Result<LatentBatch> {
        encoder::project_features(&self.params, &self.encoder, feats)
    }

    pub fn backbone_is_frozen(&self) -> bool {
        self.params.names().all(|n| {
            !n.starts_with(names::PREFIX)
                || n == names::LATENT_W
                || n == names::LATENT_B
                || !self.params.is_trainable(n)
        })
    }
}

/// Trains the latent projection and head on positive-class images.
pub fn train(model: &mut OneClassModel, images: &[Tensor], cfg: &TrainConfig, exec: Exec) -> Result<TrainHistory> {
    cfg.validate()?;
    if !model.backbone_is_frozen() {
        return Err(Error::Training("the backbone must be frozen before training".into()));
    }
    let feats = model.backbone_features(images, exec)?;
    train_on_features(model, &feats, cfg)
}

/// Training loop over precomputed backbone features (`N×E`). Valid because
/// the frozen backbone output does not change during training.
///
/// Each epoch visits a fresh permutation in full batches of `B` (the
/// incomplete tail is dropped). Per step: project + normalize the batch, draw
/// `B` fresh pseudo-negatives, stack to `2B` rows, head forward, softmax BCE,
/// backward, one Adam step on the trainable parameters.
pub fn train_on_features(model: &mut OneClassModel, feats: &Tensor, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if !model.backbone_is_frozen() {
        return Err(Error::Training("the backbone must be frozen before training".into()));
    }
    if cfg.noise.dim != model.encoder.latent_dim {
        return Err(Error::config(format!(
            "noise dimension {} differs from latent dimension {}",
            cfg.noise.dim, model.encoder.latent_dim
        )));
    }
    let n = feats.rows();
    let b = cfg.batch_size;
    let steps_per_epoch = n / b;
    if steps_per_epoch == 0 {
        return Err(Error::config(format!(
            "batch size {b} exceeds the {n} training images"
        )));
    }
    let e = feats.cols();
    let root = Rng::new(cfg.seed);
    let mut noise_rng = root.split(streams::NOISE);
    let mut shuffle_rng = root.split(streams::SHUFFLE);
    let adam = cfg.adam();
    let labels = pair_labels(b);

    let mut history = TrainHistory::default();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let order = shuffle_rng.permutation(n);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks_exact(b) {
            let mut batch = Vec::with_capacity(b * e);
            for &i in chunk {
                batch.extend_from_slice(feats.row(i));
            }
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::matrix(b, e, batch)?);
            let z = encoder::project_on_tape(&mut tape, &model.params, &model.encoder, x)?;
            let noise = sample_pseudo_negatives(&mut noise_rng, b, &cfg.noise)?;
            check_pairing(tape.value(z).shape(), &noise)?;
            let nz = tape.leaf(noise);
            let stacked = tape.concat_rows(&[z, nz])?;
            let logits = model.head.forward_on_tape(&mut tape, &model.params, stacked)?;
            let loss_var = tape.softmax_bce(logits, &labels)?;
            let loss = tape.value(loss_var).data()[0];
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss {loss} at step {step} (epoch {epoch})"
                )));
            }
            correct += tape
                .value(logits)
                .data()
                .chunks_exact(2)
                .zip(&labels)
                .filter(|(z, &y)| u8::from(z[1] > z[0]) == y)
                .count();

            let grads = tape.backward(loss_var)?;
            tape.write_param_grads(&grads, &mut model.params)?;
            adam_step(&mut model.params, &adam)?;
            model.params.round_trainable_to_f32();

            history.steps.push(StepRecord { step, epoch, loss });
            loss_sum += loss;
            step += 1;
        }
        history.epoch_loss.push(loss_sum / steps_per_epoch as f64);
        history
            .epoch_accuracy
            .push(correct as f64 / (2 * b * steps_per_epoch) as f64);
    }
    Ok(history)
}

/// Probability of the pseudo-negative class for each image.
pub fn anomaly_scores(model: &OneClassModel, images: &[Tensor], exec: Exec) -> Result<Vec<f64>> {
    let latent = model.latent(images, exec)?;
    model.scorer().score_rows(&latent.features)
}

pub fn anomaly_score(model: &OneClassModel, image: &Tensor) -> Result<f64> {
    Ok(anomaly_scores(model, std::slice::from_ref(image), Exec::Sequential)?[0])
}
