use std::collections::BTreeMap;

use super::report::{aggregate, AblationPoint, EvalReport};
use super::run::{run_one, PoolFeatures, RunConfig};
use super::splits::{Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::heads::HeadKind;
use crate::oneclass::NoiseConfig;
use crate::par::Exec;

/// Default batch-size axis: `2^3 ..= 2^8`.
pub const DEFAULT_BATCH_SIZES: [usize; 6] = [8, 16, 32, 64, 128, 256];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AblationGrid {
    pub batch_sizes: Vec<usize>,
    pub latent_dims: Vec<usize>,
    pub depths: Vec<usize>,
    pub heads: Vec<HeadKind>,
}

impl AblationGrid {
    /// Default batch-size axis; the other axes hold the base configuration.
    pub fn around(base: &RunConfig) -> Self {
        Self {
            batch_sizes: DEFAULT_BATCH_SIZES.to_vec(),
            latent_dims: vec![base.encoder.latent_dim],
            depths: vec![base.head_depth],
            heads: vec![base.head],
        }
    }

    /// Cartesian product in axis order batch size, latent dim, depth, head.
    pub fn points(&self) -> Vec<AblationPoint> {
        let mut out = Vec::new();
        for &batch_size in &self.batch_sizes {
            for &latent_dim in &self.latent_dims {
                for &depth in &self.depths {
                    for &head in &self.heads {
                        out.push(AblationPoint {
                            batch_size,
                            latent_dim,
                            depth,
                            head,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_sizes.is_empty() || self.latent_dims.is_empty() || self.depths.is_empty() || self.heads.is_empty() {
            return Err(Error::config("every ablation axis needs at least one value"));
        }
        Ok(())
    }
}

/// `base` with one grid point's coordinates substituted.
pub fn point_config(base: &RunConfig, p: &AblationPoint) -> RunConfig {
    let mut cfg = base.clone();
    cfg.train.batch_size = p.batch_size;
    cfg.encoder.latent_dim = p.latent_dim;
    cfg.train.noise = NoiseConfig {
        dim: p.latent_dim,
        ..base.train.noise
    };
    cfg.head_depth = p.depth;
    cfg.head = p.head;
    cfg
}

/// Outcome of one grid point: its report, or the first failure.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationResult {
    pub point: AblationPoint,
    pub outcome: std::result::Result<EvalReport, String>,
}

impl AblationResult {
    pub fn failed(&self) -> bool {
        self.outcome.is_err()
    }
}

/// Runs every grid point for every seed and split. Backbone features are
/// computed once per seed and shared; a failing point is recorded and the
/// rest of the grid continues.
pub fn run_ablation(
    data: &Dataset,
    splits: &[SplitSpec],
    grid: &AblationGrid,
    base: &RunConfig,
    seeds: &[u64],
    exec: Exec,
) -> Result<Vec<AblationResult>> {
    grid.validate()?;
    if seeds.is_empty() || splits.is_empty() {
        return Err(Error::config("ablation needs at least one seed and one split"));
    }
    let pools = seeds
        .iter()
        .map(|&s| PoolFeatures::compute(data, &base.encoder, s, exec))
        .collect::<Result<Vec<_>>>()?;
    let split_feats = pools
        .iter()
        .map(|p| splits.iter().map(|s| p.for_split(s)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;

    let points = grid.points();
    let jobs: Vec<(usize, usize, usize)> = (0..points.len())
        .flat_map(|p| (0..seeds.len()).flat_map(move |k| (0..splits.len()).map(move |s| (p, k, s))))
        .collect();
    let aucs = exec.map(&jobs, |&(p, k, s)| -> Result<f64> {
        let cfg = point_config(base, &points[p]);
        Ok(run_one(&cfg, &splits[s], &split_feats[k][s], seeds[k])?.auc)
    });

    let mut results = Vec::with_capacity(points.len());
    let mut it = aucs.into_iter();
    for point in points {
        let mut per_class: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut failure = None;
        for _ in seeds {
            for split in splits {
                match it.next().expect("one result per job") {
                    Ok(a) => per_class.entry(split.normal_class).or_default().push(a),
                    Err(e) => {
                        failure.get_or_insert_with(|| e.to_string());
                    }
                }
            }
        }
        let outcome = match failure {
            Some(msg) => Err(msg),
            None => aggregate(per_class)
                .map(|mut r| {
                    r.seeds = seeds.to_vec();
                    r.point = Some(point);
                    r
                })
                .map_err(|e| e.to_string()),
        };
        results.push(AblationResult { point, outcome });
    }
    Ok(results)
}
