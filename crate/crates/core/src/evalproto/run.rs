use std::collections::BTreeMap;

use super::auc::auc_roc;
use super::report::{aggregate, EvalReport};
use super::splits::{Dataset, SplitSpec};
use crate::encoder::EncoderConfig;
use crate::error::Result;
use crate::heads::{kde_fit, svm_fit, AnomalyScorer, HeadKind, SvmOptions};
use crate::numcore::{Rng, Tensor};
use crate::oneclass::{sample_pseudo_negatives, streams, train_on_features, OneClassModel, TrainConfig, TrainHistory};
use crate::par::Exec;

/// Everything needed to train and score one split for one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub head: HeadKind,
    pub head_depth: usize,
    pub svm_c: f64,
    pub svm: SvmOptions,
}

impl RunConfig {
    pub fn new(encoder: EncoderConfig) -> Self {
        let train = TrainConfig::new(encoder.latent_dim);
        Self {
            encoder,
            train,
            head: HeadKind::Mlp,
            head_depth: 1,
            svm_c: 1.0,
            svm: SvmOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.train.validate()?;
        if self.train.noise.dim != self.encoder.latent_dim {
            return Err(crate::Error::config(format!(
                "noise dimension {} differs from latent dimension {}",
                self.train.noise.dim, self.encoder.latent_dim
            )));
        }
        Ok(())
    }
}

/// Frozen-backbone features of a split's train and test images.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitFeatures {
    pub train: Tensor,
    pub test: Tensor,
}

/// Backbone features for every image of both pools under `seed`'s backbone.
/// They depend only on the backbone part of the encoder configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolFeatures {
    pub train: Tensor,
    pub test: Tensor,
}

impl PoolFeatures {
    pub fn compute(data: &Dataset, encoder: &EncoderConfig, seed: u64, exec: Exec) -> Result<Self> {
        let model = OneClassModel::init(encoder.clone(), 1, seed)?;
        Ok(Self {
            train: model.backbone_features(&data.train.images, exec)?,
            test: model.backbone_features(&data.test.images, exec)?,
        })
    }

    pub fn for_split(&self, split: &SplitSpec) -> Result<SplitFeatures> {
        Ok(SplitFeatures {
            train: gather_rows(&self.train, &split.train)?,
            test: gather_rows(&self.test, &split.test)?,
        })
    }
}

fn gather_rows(t: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(idx.len() * t.cols());
    for &i in idx {
        data.extend_from_slice(t.row(i));
    }
    Tensor::matrix(idx.len(), t.cols(), data)
}

pub fn split_features(data: &Dataset, split: &SplitSpec, model: &OneClassModel, exec: Exec) -> Result<SplitFeatures> {
    Ok(SplitFeatures {
        train: model.backbone_features(&data.train.select(&split.train), exec)?,
        test: model.backbone_features(&data.test.select(&split.test), exec)?,
    })
}

/// Seeds model initialization, noise and shuffling from `seed`, then trains.
pub fn train_split(cfg: &RunConfig, feats: &SplitFeatures, seed: u64) -> Result<(OneClassModel, TrainHistory)> {
    cfg.validate()?;
    let mut model = OneClassModel::init(cfg.encoder.clone(), cfg.head_depth, seed)?;
    let mut tcfg = cfg.train.clone();
    tcfg.seed = seed;
    let history = train_on_features(&mut model, &feats.train, &tcfg)?;
    Ok((model, history))
}

/// Test-set anomaly scores from the configured head. KDE fits on the train
/// latents; the SVM fits train latents against an equal number of fresh
/// pseudo-negatives.
pub fn score_split(model: &OneClassModel, cfg: &RunConfig, feats: &SplitFeatures, seed: u64) -> Result<Vec<f64>> {
    let test = model.latent_from_features(&feats.test)?.features;
    match cfg.head {
        HeadKind::Mlp => model.scorer().score_rows(&test),
        HeadKind::Kde => {
            let train = model.latent_from_features(&feats.train)?.features;
            kde_fit(&train)?.score_rows(&test)
        }
        HeadKind::Svm => {
            let train = model.latent_from_features(&feats.train)?.features;
            let mut rng = Rng::new(seed).split(streams::SVM_NOISE);
            let noise = sample_pseudo_negatives(&mut rng, train.rows(), &cfg.train.noise)?;
            svm_fit(&train, &noise, cfg.svm_c, cfg.svm)?.score_rows(&test)
        }
    }
}

pub fn eval_split(model: &OneClassModel, cfg: &RunConfig, split: &SplitSpec, feats: &SplitFeatures, seed: u64) -> Result<f64> {
    let scores = score_split(model, cfg, feats, seed)?;
    auc_roc(&scores, &split.test_labels)
}

/// Result of training and evaluating one (split, seed) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub model: OneClassModel,
    pub history: TrainHistory,
    pub auc: f64,
}

pub fn run_one(cfg: &RunConfig, split: &SplitSpec, feats: &SplitFeatures, seed: u64) -> Result<RunOutcome> {
    let (model, history) = train_split(cfg, feats, seed)?;
    let auc = eval_split(&model, cfg, split, feats, seed)?;
    Ok(RunOutcome { model, history, auc })
}

/// Trains and evaluates every split under every seed, then aggregates.
pub fn run_eval(data: &Dataset, splits: &[SplitSpec], cfg: &RunConfig, seeds: &[u64], exec: Exec) -> Result<EvalReport> {
    let mut per_class: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &seed in seeds {
        let pool = PoolFeatures::compute(data, &cfg.encoder, seed, exec)?;
        let aucs = exec.map(splits, |split| -> Result<f64> {
            let feats = pool.for_split(split)?;
            Ok(run_one(cfg, split, &feats, seed)?.auc)
        });
        for (split, auc) in splits.iter().zip(aucs) {
            per_class.entry(split.normal_class).or_default().push(auc?);
        }
    }
    let mut report = aggregate(per_class)?;
    report.seeds = seeds.to_vec();
    Ok(report)
}
