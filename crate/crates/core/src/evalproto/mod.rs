//! One-vs-all splits, AUC-ROC, multi-seed aggregation and ablation grids.

mod ablation;
mod auc;
mod report;
mod run;
mod splits;

pub use ablation::{point_config, run_ablation, AblationGrid, AblationResult, DEFAULT_BATCH_SIZES};
pub use auc::{auc_pairwise, auc_roc};
pub use report::{aggregate, mean_std, AblationPoint, ClassStats, EvalReport};
pub use run::{
    eval_split, run_eval, run_one, score_split, split_features, train_split, PoolFeatures, RunConfig, RunOutcome,
    SplitFeatures,
};
pub use splits::{build_split, build_splits, Dataset, LabeledImages, Protocol, SplitSpec};

/// Default seed list: `base + 0 .. base + 4`.
pub fn default_seeds(base: u64) -> Vec<u64> {
    (0..5).map(|k| base + k).collect()
}
