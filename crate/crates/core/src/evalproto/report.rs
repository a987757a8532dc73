use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::heads::HeadKind;

/// Coordinates of one ablation grid point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AblationPoint {
    pub batch_size: usize,
    pub latent_dim: usize,
    pub depth: usize,
    pub head: HeadKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassStats {
    pub mean: f64,
    pub std: f64,
}

/// Per-class, per-seed AUCs with summaries. `per_class[c][k]` belongs to
/// `seeds[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    pub per_class: BTreeMap<usize, Vec<f64>>,
    pub class_stats: BTreeMap<usize, ClassStats>,
    /// Unweighted mean of the class means.
    pub mean: f64,
    /// Sample std over seeds of the class-averaged AUC.
    pub std: f64,
    pub config: String,
    pub point: Option<AblationPoint>,
}

/// Mean and sample standard deviation (`n − 1`; zero for one value).
pub fn mean_std(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::Eval("mean of an empty list".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// Summarizes `class → per-seed AUC` lists. Seed index `k` of the
/// dataset-level std averages the classes that have a `k`-th value.
pub fn aggregate(per_class: BTreeMap<usize, Vec<f64>>) -> Result<EvalReport> {
    if per_class.is_empty() {
        return Err(Error::Eval("no classes to aggregate".into()));
    }
    let mut class_stats = BTreeMap::new();
    for (&c, aucs) in &per_class {
        if aucs.is_empty() {
            return Err(Error::Eval(format!("class {c} has no AUC values")));
        }
        if let Some(bad) = aucs.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Eval(format!("class {c} has AUC {bad} outside [0, 1]")));
        }
        let (mean, std) = mean_std(aucs)?;
        class_stats.insert(c, ClassStats { mean, std });
    }
    let means: Vec<f64> = class_stats.values().map(|s| s.mean).collect();
    let (mean, _) = mean_std(&means)?;
    let runs = per_class.values().map(Vec::len).max().unwrap_or(0);
    let per_seed: Vec<f64> = (0..runs)
        .map(|k| {
            let vals: Vec<f64> = per_class.values().filter_map(|v| v.get(k).copied()).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect();
    let (_, std) = mean_std(&per_seed)?;
    Ok(EvalReport {
        seeds: Vec::new(),
        per_class,
        class_stats,
        mean,
        std,
        config: String::new(),
        point: None,
    })
}
