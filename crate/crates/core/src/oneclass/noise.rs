use crate::encoder::LatentBatch;
use crate::error::{Error, Result};
use crate::numcore::{Rng, Tensor};

/// Per-dimension Gaussian `N(mu, sigma2)` for pseudo-negatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub mu: f64,
    pub sigma2: f64,
    pub dim: usize,
}

impl NoiseConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            mu: 0.0,
            sigma2: 0.01,
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::config(format!(
                "noise variance must be positive, got {}",
                self.sigma2
            )));
        }
        if self.dim == 0 {
            return Err(Error::config("noise dimension must be positive"));
        }
        Ok(())
    }
}

/// `B×D` i.i.d. draws, row-major, Box–Muller on `rng`.
pub fn sample_pseudo_negatives(rng: &mut Rng, rows: usize, noise: &NoiseConfig) -> Result<Tensor> {
    noise.validate()?;
    let std = noise.sigma2.sqrt();
    let data = (0..rows * noise.dim).map(|_| rng.gaussian(noise.mu, std)).collect();
    Tensor::matrix(rows, noise.dim, data)
}

/// `B` zeros (extractor rows) followed by `B` ones (noise rows).
pub fn pair_labels(b: usize) -> Vec<u8> {
    let mut labels = vec![0u8; 2 * b];
    labels[b..].fill(1);
    labels
}

pub(crate) fn check_pairing(latent_shape: &[usize], noise: &Tensor) -> Result<()> {
    let (b, d) = (latent_shape[0], latent_shape.get(1).copied().unwrap_or(1));
    if noise.shape() != [b, d] {
        return Err(Error::Assembly(format!(
            "latent batch {latent_shape:?} cannot be paired with noise {:?}",
            noise.shape()
        )));
    }
    Ok(())
}

/// Stacks latent rows over noise rows into the `2B×D` classifier input.
pub fn assemble_batch(latent: &LatentBatch, noise: &Tensor) -> Result<(Tensor, Vec<u8>)> {
    check_pairing(latent.features.shape(), noise)?;
    let b = latent.rows();
    let mut data = Vec::with_capacity(2 * latent.features.len());
    data.extend_from_slice(latent.features.data());
    data.extend_from_slice(noise.data());
    Ok((Tensor::matrix(2 * b, latent.dim(), data)?, pair_labels(b)))
}

/// `−(1/2K) Σ [y ln p + (1−y) ln(1−p)]` for given probabilities `p = P(y=1)`.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::Loss(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        total += match y {
            0 => (1.0 - p).ln(),
            1 => p.ln(),
            other => return Err(Error::Loss(format!("label {other} outside {{0, 1}}"))),
        };
    }
    Ok(-total / probs.len() as f64)
}
