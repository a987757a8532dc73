use std::f64::consts::PI;

use super::AnomalyScorer;
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::par::Exec;

/// Isotropic Gaussian kernel density over training latent features.
#[derive(Clone, Debug, PartialEq)]
pub struct KdeHead {
    pub support: Tensor,
    pub bandwidth: f64,
}

/// Scott's rule `h = N^(−1/(D+4)) · σ̄`, with `σ̄` the mean of the
/// per-dimension sample standard deviations.
pub fn scott_bandwidth(support: &Tensor) -> f64 {
    let (n, d) = (support.rows(), support.cols());
    if n < 2 {
        return 0.0;
    }
    let mut sd_sum = 0.0;
    for j in 0..d {
        let mean = (0..n).map(|i| support.row(i)[j]).sum::<f64>() / n as f64;
        let ss: f64 = (0..n).map(|i| (support.row(i)[j] - mean).powi(2)).sum();
        sd_sum += (ss / (n - 1) as f64).sqrt();
    }
    (n as f64).powf(-1.0 / (d as f64 + 4.0)) * sd_sum / d as f64
}

/// Fits on positive-class latent rows with Scott's bandwidth.
pub fn kde_fit(train_latent: &Tensor) -> Result<KdeHead> {
    KdeHead::new(train_latent.clone(), scott_bandwidth(train_latent))
}

impl KdeHead {
    pub fn new(support: Tensor, bandwidth: f64) -> Result<Self> {
        if support.rows() < 1 || support.is_empty() {
            return Err(Error::config("KDE needs at least one support point"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::config(format!(
                "KDE bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self { support, bandwidth })
    }

    pub fn dim(&self) -> usize {
        self.support.cols()
    }

    /// `log q(x)` via log-sum-exp over kernels.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let h2 = self.bandwidth * self.bandwidth;
        let n = self.support.rows();
        let d = self.dim() as f64;
        let expo: Vec<f64> = (0..n)
            .map(|i| {
                let dist2: f64 = self.support.row(i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                -dist2 / (2.0 * h2)
            })
            .collect();
        let mx = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + expo.iter().map(|e| (e - mx).exp()).sum::<f64>().ln();
        -0.5 * d * (2.0 * PI * h2).ln() + lse - (n as f64).ln()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// `−log q(x)`; larger is more anomalous.
    pub fn kde_score(&self, x: &[f64]) -> f64 {
        -self.log_density(x)
    }
}

impl AnomalyScorer for KdeHead {
    fn score_rows(&self, latent: &Tensor) -> Result<Vec<f64>> {
        if latent.cols() != self.dim() {
            return Err(Error::dim(format!(
                "KDE over {} dims scoring features {:?}",
                self.dim(),
                latent.shape()
            )));
        }
        Ok(Exec::default().map_range(latent.rows(), |i| self.kde_score(latent.row(i))))
    }
}
