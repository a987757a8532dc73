use super::AnomalyScorer;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Solver settings for the primal subgradient method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmOptions {
    pub max_iter: usize,
    /// Iteration `t` steps by `step0/sqrt(t+1)` along the subgradient.
    pub step0: f64,
    /// Stop once the best objective improved by less than `tol` (relative)
    /// over the last `window` iterations.
    pub tol: f64,
    pub window: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            max_iter: 3000,
            step0: 1.0,
            tol: 1e-10,
            window: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmReport {
    pub iterations: usize,
    pub converged: bool,
    /// Best objective seen after every iteration (index 0 = starting point).
    pub objective_trace: Vec<f64>,
    /// Set when the iteration budget ran out before convergence.
    pub warning: Option<String>,
}

/// Linear soft-margin SVM. Target-class latent rows are labelled −1, noise
/// rows +1, so `w·x + b` grows toward the anomalous side.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmHead {
    pub weight: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub report: SvmReport,
}

impl SvmHead {
    pub fn svm_score(&self, x: &[f64]) -> f64 {
        self.weight.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

impl AnomalyScorer for SvmHead {
    fn score_rows(&self, latent: &Tensor) -> Result<Vec<f64>> {
        if latent.cols() != self.weight.len() {
            return Err(Error::dim(format!(
                "SVM over {} dims scoring features {:?}",
                self.weight.len(),
                latent.shape()
            )));
        }
        Ok((0..latent.rows()).map(|i| self.svm_score(latent.row(i))).collect())
    }
}

struct Problem<'a> {
    xs: Vec<&'a [f64]>,
    ys: Vec<f64>,
    lambda: f64,
}

impl Problem<'_> {
    /// `λ/2‖w‖² + (1/n) Σ max(0, 1 − y(w·x + b))`
    fn objective(&self, w: &[f64], b: f64) -> f64 {
        let n = self.xs.len() as f64;
        let reg = 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>();
        let hinge: f64 = self
            .xs
            .iter()
            .zip(&self.ys)
            .map(|(x, y)| {
                let m = y * (w.iter().zip(x.iter()).map(|(a, c)| a * c).sum::<f64>() + b);
                (1.0 - m).max(0.0)
            })
            .sum();
        reg + hinge / n
    }

    fn subgradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let n = self.xs.len() as f64;
        let mut gw: Vec<f64> = w.iter().map(|v| self.lambda * v).collect();
        let mut gb = 0.0;
        for (x, &y) in self.xs.iter().zip(&self.ys) {
            let m = y * (w.iter().zip(x.iter()).map(|(a, c)| a * c).sum::<f64>() + b);
            if m < 1.0 {
                gw.iter_mut().zip(x.iter()).for_each(|(g, v)| *g -= y * v / n);
                gb -= y / n;
            }
        }
        (gw, gb)
    }
}

/// Trains on `target` (label −1) against `noise` (label +1) with
/// `λ = 1/(n·C)`, `n` the total sample count. Full-batch subgradient descent
/// with diminishing steps. Returns the best iterate, also without convergence,
/// so the recorded trace never increases.
pub fn svm_fit(target: &Tensor, noise: &Tensor, c: f64, opts: SvmOptions) -> Result<SvmHead> {
    if !(c > 0.0) {
        return Err(Error::config(format!("SVM C must be positive, got {c}")));
    }
    if target.rows() == 0 || noise.rows() == 0 || target.is_empty() || noise.is_empty() {
        return Err(Error::config("SVM needs two non-empty classes"));
    }
    if target.cols() != noise.cols() {
        return Err(Error::dim(format!(
            "SVM classes have shapes {:?} and {:?}",
            target.shape(),
            noise.shape()
        )));
    }
    let d = target.cols();
    let mut xs = Vec::with_capacity(target.rows() + noise.rows());
    let mut ys = Vec::with_capacity(xs.capacity());
    for i in 0..target.rows() {
        xs.push(target.row(i));
        ys.push(-1.0);
    }
    for i in 0..noise.rows() {
        xs.push(noise.row(i));
        ys.push(1.0);
    }
    let n = xs.len() as f64;
    let prob = Problem { xs, ys, lambda: 1.0 / (n * c) };

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (prob.objective(&w, b), w.clone(), b);
    let mut trace = vec![best.0];
    let mut converged = false;
    let mut iterations = 0;
    for t in 0..opts.max_iter {
        iterations = t + 1;
        let (gw, gb) = prob.subgradient(&w, b);
        if gw.iter().all(|g| *g == 0.0) && gb == 0.0 {
            converged = true;
            break;
        }
        // the iterate moves freely across kinks; the returned point is the best seen
        let step = opts.step0 / ((t + 1) as f64).sqrt();
        w.iter_mut().zip(&gw).for_each(|(a, g)| *a -= step * g);
        b -= step * gb;
        let o = prob.objective(&w, b);
        if o < best.0 {
            best = (o, w.clone(), b);
        }
        trace.push(best.0);
        if trace.len() > opts.window {
            let old = trace[trace.len() - 1 - opts.window];
            if old - best.0 <= opts.tol * old.abs().max(1e-12) {
                converged = true;
                break;
            }
        }
    }
    let (_, w, b) = best;
    let warning = (!converged).then(|| {
        format!(
            "subgradient solver stopped after {iterations} iterations without meeting tolerance {}",
            opts.tol
        )
    });
    Ok(SvmHead {
        weight: w,
        bias: b,
        c,
        report: SvmReport {
            iterations,
            converged,
            objective_trace: trace,
            warning,
        },
    })
}
