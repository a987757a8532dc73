//! Scoring heads over the latent space.

mod fc;
mod kde;
mod svm;

use std::fmt;
use std::str::FromStr;

pub use fc::{FcHead, FcScorer};
pub use kde::{kde_fit, scott_bandwidth, KdeHead};
pub use svm::{svm_fit, SvmHead, SvmOptions, SvmReport};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Anything that maps latent rows to anomaly scores (higher = more
/// anomalous).
pub trait AnomalyScorer: Sync {
    fn score_rows(&self, latent: &Tensor) -> Result<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeadKind {
    Mlp,
    Svm,
    Kde,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Mlp => "mlp",
            HeadKind::Svm => "svm",
            HeadKind::Kde => "kde",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(HeadKind::Mlp),
            "svm" => Ok(HeadKind::Svm),
            "kde" => Ok(HeadKind::Kde),
            other => Err(Error::Config(format!(
                "unknown head `{other}` (expected mlp, svm or kde)"
            ))),
        }
    }
}
