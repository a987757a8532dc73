//! Finite-difference gradient suite over every differentiable operation and
//! the full tiny pipeline.

use crate::encoder::{self, EncoderConfig};
use crate::error::Result;
use crate::heads::FcHead;
use crate::numcore::{grad_check, msa, GradCheckReport, MsaVars, ParamStore, Rng, Tape, Tensor, Var};
use crate::oneclass::{pair_labels, sample_pseudo_negatives, NoiseConfig};

/// Tolerance for single operations.
pub const OP_TOL: f64 = 1e-4;
/// Tolerance for the composed pipeline.
pub const PIPELINE_TOL: f64 = 1e-3;
/// Random points per operation.
pub const POINTS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub checks: Vec<GradCheckReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(GradCheckReport::passed)
    }

    pub fn failures(&self) -> Vec<&GradCheckReport> {
        self.checks.iter().filter(|r| !r.passed()).collect()
    }
}

fn randn(rng: &mut Rng, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gaussian(0.0, std)).collect()).expect("shape")
}

/// Reduces a tensor to a scalar with fixed random weights, so every output
/// element contributes to the checked gradient.
fn reduce(tape: &mut Tape, y: Var, rng_seed: u64) -> Result<Var> {
    let n = tape.value(y).len();
    let mut r = Rng::new(rng_seed);
    tape.weighted_sum(y, (0..n).map(|_| r.gaussian(0.0, 1.0)).collect())
}

fn repeat<F>(name: &str, seed: u64, tol: f64, points: usize, mut case: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Rng, u64) -> Result<GradCheckReport>,
{
    let root = Rng::new(seed);
    let mut total: Option<GradCheckReport> = None;
    for i in 0..points {
        let mut rng = root.split(i as u64);
        let r = case(&mut rng, root.split(i as u64 + 10_000).seed())?;
        total = Some(match total {
            None => r,
            Some(t) => t.merge(&r),
        });
    }
    let mut t = total.expect("at least one point");
    t.name = name.to_string();
    t.rel_tol = tol;
    Ok(t)
}

pub fn check_linear(seed: u64, points: usize) -> Result<GradCheckReport> {
    repeat("linear", seed, OP_TOL, points, |rng, ws| {
        let inputs = [randn(rng, &[3, 4], 1.0), randn(rng, &[4, 5], 1.0), randn(rng, &[5], 1.0)];
        grad_check(
            "linear",
            |t, v| {
                let y = t.linear(v[0], v[1], Some(v[2]))?;
                reduce(t, y, ws)
            },
            &inputs,
            OP_TOL,
        )
    })
}

pub fn check_gelu(seed: u64, points: usize) -> Result<GradCheckReport> {
    repeat("gelu", seed, OP_TOL, points, |rng, ws| {
        let inputs = [randn(rng, &[2, 6], 2.0)];
        grad_check(
            "gelu",
            |t, v| {
                let y = t.gelu(v[0]);
                reduce(t, y, ws)
            },
            &inputs,
            OP_TOL,
        )
    })
}

pub fn check_layer_norm(seed: u64, points: usize) -> Result<GradCheckReport> {
    repeat("layer_norm", seed, OP_TOL, points, |rng, ws| {
        let mut gamma = randn(rng, &[5], 0.3);
        gamma.data_mut().iter_mut().for_each(|g| *g += 1.0);
        let inputs = [randn(rng, &[3, 5], 1.0), gamma, randn(rng, &[5], 0.3)];
        grad_check(
            "layer_norm",
            |t, v| {
                let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
                reduce(t, y, ws)
            },
            &inputs,
            OP_TOL,
        )
    })
}

pub fn check_softmax(seed: u64, points: usize) -> Result<GradCheckReport> {
    repeat("softmax", seed, OP_TOL, points, |rng, ws| {
        let inputs = [randn(rng, &[3, 4], 1.5)];
        grad_check(
            "softmax",
            |t, v| {
                let y = t.softmax(v[0]);
                reduce(t, y, ws)
            },
            &inputs,
            OP_TOL,
        )
    })
}

pub fn check_msa(seed: u64, points: usize) -> Result<GradCheckReport> {
    const D: usize = 4;
    repeat("msa", seed, OP_TOL, points, |rng, ws| {
        let mut inputs = vec![randn(rng, &[3, D], 1.0)];
        for _ in 0..4 {
            inputs.push(randn(rng, &[D, D], 0.5));
            inputs.push(randn(rng, &[D], 0.2));
        }
        grad_check(
            "msa",
            |t, v| {
                let p = MsaVars {
                    wq: v[1],
                    bq: v[2],
                    wk: v[3],
                    bk: v[4],
                    wv: v[5],
                    bv: v[6],
                    wo: v[7],
                    bo: v[8],
                };
                let y = msa(t, v[0], &p, 2)?;
                reduce(t, y, ws)
            },
            &inputs,
            OP_TOL,
        )
    })
}

/// Random values for every tensor of `specs` (LN gains centred on 1).
fn random_store(rng: &mut Rng, specs: &[(String, Vec<usize>, encoder::Init)]) -> (Vec<String>, Vec<Tensor>) {
    let mut names = Vec::with_capacity(specs.len());
    let mut values = Vec::with_capacity(specs.len());
    for (name, shape, init) in specs {
        let mut t = randn(rng, shape, 0.4);
        if *init == encoder::Init::Ones {
            t.data_mut().iter_mut().for_each(|g| *g += 1.0);
        }
        names.push(name.clone());
        values.push(t);
    }
    (names, values)
}

fn bind_all(tape: &mut Tape, names: &[String], vars: &[Var]) {
    for (n, &v) in names.iter().zip(vars) {
        tape.bind_param(n, v);
    }
}

fn block_config() -> EncoderConfig {
    EncoderConfig {
        image_size: 8,
        channels: 1,
        patch_size: 4,
        embed_dim: 4,
        depth: 1,
        heads: 2,
        mlp_ratio: 2,
        latent_dim: 4,
        ..EncoderConfig::vit_tiny_test(1)
    }
}

pub fn check_encoder_block(seed: u64, points: usize) -> Result<GradCheckReport> {
    let cfg = block_config();
    let specs: Vec<_> = cfg
        .param_specs()
        .into_iter()
        .filter(|(n, _, _)| n.starts_with("encoder.blocks.0."))
        .collect();
    let empty = ParamStore::new();
    repeat("encoder_block", seed, OP_TOL, points, |rng, ws| {
        let (pnames, mut inputs) = random_store(rng, &specs);
        inputs.push(randn(rng, &[3, cfg.embed_dim], 1.0));
        grad_check(
            "encoder_block",
            |t, v| {
                let (params, x) = v.split_at(v.len() - 1);
                bind_all(t, &pnames, params);
                let y = encoder::encoder_block_on_tape(t, &empty, &cfg, 0, x[0])?;
                reduce(t, y, ws)
            },
            &inputs,
            OP_TOL,
        )
    })
}

pub fn check_fc_head(seed: u64, points: usize) -> Result<GradCheckReport> {
    let head = FcHead::new(4, 3)?;
    let specs = head.param_specs();
    let empty = ParamStore::new();
    repeat("fc_head", seed, OP_TOL, points, |rng, ws| {
        let (pnames, mut inputs) = random_store(rng, &specs);
        inputs.push(randn(rng, &[3, 4], 1.0));
        grad_check(
            "fc_head",
            |t, v| {
                let (params, x) = v.split_at(v.len() - 1);
                bind_all(t, &pnames, params);
                let y = head.forward_on_tape(t, &empty, x[0])?;
                reduce(t, y, ws)
            },
            &inputs,
            OP_TOL,
        )
    })
}

pub fn check_softmax_bce(seed: u64, points: usize) -> Result<GradCheckReport> {
    repeat("bce_softmax", seed, OP_TOL, points, |rng, _| {
        let inputs = [randn(rng, &[6, 2], 2.0)];
        let labels: Vec<u8> = (0..6).map(|_| rng.below(2) as u8).collect();
        grad_check("bce_softmax", |t, v| t.softmax_bce(v[0], &labels), &inputs, OP_TOL)
    })
}

/// Tiny extractor configuration for the composed check (two blocks).
pub fn pipeline_config() -> EncoderConfig {
    EncoderConfig {
        depth: 2,
        embed_dim: 8,
        ..block_config()
    }
}

/// Images → backbone → projection → instance norm → noise pairing → head →
/// softmax BCE, differentiated with respect to every parameter.
pub fn check_pipeline(seed: u64, points: usize) -> Result<GradCheckReport> {
    let cfg = pipeline_config();
    let head = FcHead::new(cfg.latent_dim, 1)?;
    let mut specs = cfg.param_specs();
    specs.extend(head.param_specs());
    let empty = ParamStore::new();
    let noise_cfg = NoiseConfig::new(cfg.latent_dim);
    repeat("pipeline", seed, PIPELINE_TOL, points, |rng, _| {
        let (pnames, inputs) = random_store(rng, &specs);
        let images: Vec<Tensor> = (0..2).map(|_| randn(rng, &[1, 8, 8], 1.0)).collect();
        let noise = sample_pseudo_negatives(rng, 2, &noise_cfg)?;
        let labels = pair_labels(2);
        grad_check(
            "pipeline",
            |t, v| {
                bind_all(t, &pnames, v);
                let z = encoder::encode_on_tape(t, &empty, &cfg, &images)?;
                let n = t.leaf(noise.clone());
                let x = t.concat_rows(&[z, n])?;
                let logits = head.forward_on_tape(t, &empty, x)?;
                t.softmax_bce(logits, &labels)
            },
            &inputs,
            PIPELINE_TOL,
        )
    })
}

/// Every operation at [`POINTS`] random points plus the pipeline check.
pub fn run_suite(seed: u64) -> Result<SuiteReport> {
    let root = Rng::new(seed);
    let s = |i| root.split(i).seed();
    let checks = vec![
        check_linear(s(0), POINTS)?,
        check_gelu(s(1), POINTS)?,
        check_layer_norm(s(2), POINTS)?,
        check_softmax(s(3), POINTS)?,
        check_msa(s(4), POINTS)?,
        check_encoder_block(s(5), POINTS)?,
        check_fc_head(s(6), POINTS)?,
        check_softmax_bce(s(7), POINTS)?,
        check_pipeline(s(8), 3)?,
    ];
    Ok(SuiteReport { checks })
}
