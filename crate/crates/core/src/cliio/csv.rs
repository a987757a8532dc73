//! CSV renderers. Numbers use Rust's shortest round-trip formatting, which
//! is locale independent; lines end in `\n`.

use std::fmt::Write as _;

use crate::evalproto::{AblationResult, EvalReport};
use crate::oneclass::TrainHistory;

pub const HISTORY_HEADER: &str = "step,epoch,loss";
pub const EVAL_HEADER: &str = "class,seed,auc";
pub const ABLATION_HEADER: &str = "batch_size,latent_dim,depth,head,seed,class,auc";

pub fn history_csv(h: &TrainHistory) -> String {
    let mut s = format!("{HISTORY_HEADER}\n");
    for r in &h.steps {
        let _ = writeln!(s, "{},{},{}", r.step, r.epoch, r.loss);
    }
    s
}

/// One row per class and seed, then `mean,,x` and `std,,x`.
pub fn eval_csv(r: &EvalReport) -> String {
    let mut s = format!("{EVAL_HEADER}\n");
    for (class, aucs) in &r.per_class {
        for (seed, auc) in r.seeds.iter().zip(aucs) {
            let _ = writeln!(s, "{class},{seed},{auc}");
        }
    }
    let _ = writeln!(s, "mean,,{}", r.mean);
    let _ = writeln!(s, "std,,{}", r.std);
    s
}

/// One row per successful grid point, seed and class; failed points are
/// omitted here and reported separately.
pub fn ablation_csv(results: &[AblationResult]) -> String {
    let mut s = format!("{ABLATION_HEADER}\n");
    for res in results {
        let Ok(report) = &res.outcome else { continue };
        let p = res.point;
        for (k, seed) in report.seeds.iter().enumerate() {
            for (class, aucs) in &report.per_class {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{seed},{class},{}",
                    p.batch_size, p.latent_dim, p.depth, p.head, aucs[k]
                );
            }
        }
    }
    s
}
