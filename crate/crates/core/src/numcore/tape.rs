//! Minimal reverse-mode automatic differentiation over 2-D values.
//!
//! A [`Tape`] records every operation eagerly: the forward value is computed
//! when the op is pushed, together with whatever the backward rule needs.
//! [`Tape::backward`] walks the nodes in reverse and accumulates adjoints.
//! Vectors (biases, norm gains) are stored as 1-D tensors and broadcast over
//! rows where an op expects it.

use std::collections::HashMap;

use super::kernels;
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    MatMul { a: Var, b: Var },
    MatMulNt { a: Var, b: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, s: f64 },
    Gelu { x: Var },
    Standardize { x: Var, rstd: Vec<f64> },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Softmax { x: Var },
    SliceCols { x: Var, start: usize },
    ConcatCols { parts: Vec<Var> },
    SliceRows { x: Var, start: usize },
    ConcatRows { parts: Vec<Var> },
    WeightedSum { x: Var, weights: Vec<f64> },
    SoftmaxBce { logits: Var, labels: Vec<u8>, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn mat_dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn add_into(dst: &mut Option<Vec<f64>>, delta: Vec<f64>) {
    match dst {
        Some(d) => d.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
        None => *dst = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        mat_dims(&self.nodes[v.0].value)
    }

    fn shape_of(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t.detached(), Op::Leaf)
    }

    /// Leaf bound to a named store entry. Binding the same name twice returns
    /// the same variable.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = store
            .get(name)
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))?;
        let v = self.leaf(t.clone());
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Binds `name` to an existing variable; later `param` calls for that
    /// name return it instead of reading a store.
    pub fn bind_param(&mut self, name: &str, v: Var) {
        self.params.insert(name.to_string(), v);
    }

    /// `x·W + b`
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, d_in) = self.dims(x);
        let (wr, d_out) = self.dims(w);
        if self.shape_of(w).len() != 2 || wr != d_in {
            return Err(Error::dim(format!(
                "linear: input {:?} incompatible with weight {:?}",
                self.shape_of(x),
                self.shape_of(w)
            )));
        }
        if let Some(b) = b {
            if self.value(b).len() != d_out {
                return Err(Error::dim(format!(
                    "linear: bias {:?} incompatible with weight {:?}",
                    self.shape_of(b),
                    self.shape_of(w)
                )));
            }
        }
        let y = kernels::linear(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            n,
            d_in,
            d_out,
        );
        let y = Tensor::matrix(n, d_out, y)?;
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims(a);
        let (kb, m) = self.dims(b);
        if k != kb {
            return Err(Error::dim(format!(
                "matmul: {:?} × {:?}",
                self.shape_of(a),
                self.shape_of(b)
            )));
        }
        let y = kernels::matmul(self.value(a).data(), self.value(b).data(), n, k, m);
        Ok(self.push(Tensor::matrix(n, m, y)?, Op::MatMul { a, b }))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims(a);
        let (m, kb) = self.dims(b);
        if k != kb {
            return Err(Error::dim(format!(
                "matmul_nt: {:?} × {:?}ᵀ",
                self.shape_of(a),
                self.shape_of(b)
            )));
        }
        let y = kernels::matmul_nt(self.value(a).data(), self.value(b).data(), n, k, m);
        Ok(self.push(Tensor::matrix(n, m, y)?, Op::MatMulNt { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::dim(format!(
                "add: {:?} vs {:?}",
                self.shape_of(a),
                self.shape_of(b)
            )));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let y = Tensor::new(self.shape_of(a).to_vec(), data)?;
        Ok(self.push(y, Op::Add { a, b }))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x);
        let y = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * s).collect())
            .expect("same shape");
        self.push(y, Op::Scale { x, s })
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let y = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| kernels::gelu(v)).collect())
            .expect("same shape");
        self.push(y, Op::Gelu { x })
    }

    /// Per-row `(x − mean)/sqrt(var + eps)` without affine parameters.
    pub fn standardize(&mut self, x: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::config(format!("normalization eps must be > 0, got {eps}")));
        }
        let (n, d) = self.dims(x);
        let (xhat, rstd) = kernels::standardize_rows(self.value(x).data(), d, eps);
        Ok(self.push(Tensor::matrix(n, d, xhat)?, Op::Standardize { x, rstd }))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::config(format!("layer norm eps must be > 0, got {eps}")));
        }
        let (n, d) = self.dims(x);
        if self.value(gamma).len() != d || self.value(beta).len() != d {
            return Err(Error::dim(format!(
                "layer_norm: input {:?} with gamma {:?} and beta {:?}",
                self.shape_of(x),
                self.shape_of(gamma),
                self.shape_of(beta)
            )));
        }
        let (xhat, rstd) = kernels::standardize_rows(self.value(x).data(), d, eps);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut y = xhat.clone();
        for row in y.chunks_exact_mut(d) {
            for ((v, gi), bi) in row.iter_mut().zip(g).zip(b) {
                *v = *v * gi + bi;
            }
        }
        Ok(self.push(
            Tensor::matrix(n, d, y)?,
            Op::LayerNorm { x, gamma, beta, xhat, rstd },
        ))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let (n, k) = self.dims(x);
        let y = kernels::softmax_rows(self.value(x).data(), k);
        self.push(Tensor::matrix(n, k, y).expect("same shape"), Op::Softmax { x })
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (n, m) = self.dims(x);
        if start + len > m || len == 0 {
            return Err(Error::dim(format!("slice_cols {start}..{} of {m} columns", start + len)));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * len);
        for r in 0..n {
            out.extend_from_slice(&src[r * m + start..r * m + start + len]);
        }
        Ok(self.push(Tensor::matrix(n, len, out)?, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = parts
            .first()
            .map(|&p| self.dims(p).0)
            .ok_or_else(|| Error::dim("concat_cols of nothing"))?;
        if parts.iter().any(|&p| self.dims(p).0 != n) {
            return Err(Error::dim("concat_cols: row counts differ"));
        }
        let m: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(n * m);
        for r in 0..n {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::ConcatCols { parts: parts.to_vec() }))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (n, m) = self.dims(x);
        if start + len > n || len == 0 {
            return Err(Error::dim(format!("slice_rows {start}..{} of {n} rows", start + len)));
        }
        let out = self.value(x).data()[start * m..(start + len) * m].to_vec();
        Ok(self.push(Tensor::matrix(len, m, out)?, Op::SliceRows { x, start }))
    }

    /// Stacks row blocks. 1-D parts count as a single row.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let m = parts
            .first()
            .map(|&p| self.dims(p).1)
            .ok_or_else(|| Error::dim("concat_rows of nothing"))?;
        if let Some(&bad) = parts.iter().find(|&&p| self.dims(p).1 != m) {
            return Err(Error::dim(format!(
                "concat_rows: {:?} does not have {m} columns",
                self.shape_of(bad)
            )));
        }
        let n: usize = parts.iter().map(|&p| self.dims(p).0).sum();
        let mut out = Vec::with_capacity(n * m);
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::ConcatRows { parts: parts.to_vec() }))
    }

    /// Scalar `Σ weights ⊙ x`.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(Error::dim(format!(
                "weighted_sum: {} weights for {:?}",
                weights.len(),
                self.shape_of(x)
            )));
        }
        let s = self.value(x).data().iter().zip(&weights).map(|(a, b)| a * b).sum();
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { x, weights }))
    }

    /// Mean binary cross-entropy of two-class logits (`M×2`) where the
    /// predicted probability is the softmax mass on class 1. Evaluated via
    /// log-sum-exp; no probability clamping.
    pub fn softmax_bce(&mut self, logits: Var, labels: &[u8]) -> Result<Var> {
        let (m, k) = self.dims(logits);
        if k != 2 || m != labels.len() {
            return Err(Error::dim(format!(
                "softmax_bce: logits {:?} with {} labels",
                self.shape_of(logits),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Loss(format!("label {l} outside {{0, 1}}")));
        }
        let z = self.value(logits).data();
        let lse = kernels::logsumexp_rows(z, 2);
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            total -= z[2 * i + y as usize] - lse[i];
        }
        let probs = kernels::softmax_rows(z, 2);
        let loss = total / m as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxBce { logits, labels: labels.to_vec(), probs },
        ))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::dim(format!(
                "backward needs a scalar, got {:?}",
                self.shape_of(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (n, d_in) = self.dims(*x);
                let d_out = node.value.cols();
                let dx = kernels::matmul_nt(g, self.value(*w).data(), n, d_out, d_in);
                let dw = kernels::matmul_tn(self.value(*x).data(), g, n, d_in, d_out);
                add_into(&mut grads[x.0], dx);
                add_into(&mut grads[w.0], dw);
                if let Some(b) = b {
                    let mut db = vec![0.0; d_out];
                    for row in g.chunks_exact(d_out) {
                        db.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                    add_into(&mut grads[b.0], db);
                }
            }
            Op::MatMul { a, b } => {
                let (n, k) = self.dims(*a);
                let m = node.value.cols();
                let da = kernels::matmul_nt(g, self.value(*b).data(), n, m, k);
                let db = kernels::matmul_tn(self.value(*a).data(), g, n, k, m);
                add_into(&mut grads[a.0], da);
                add_into(&mut grads[b.0], db);
            }
            Op::MatMulNt { a, b } => {
                let (n, k) = self.dims(*a);
                let m = node.value.cols();
                let da = kernels::matmul(g, self.value(*b).data(), n, m, k);
                let db = kernels::matmul_tn(g, self.value(*a).data(), n, m, k);
                add_into(&mut grads[a.0], da);
                add_into(&mut grads[b.0], db);
            }
            Op::Add { a, b } => {
                add_into(&mut grads[a.0], g.to_vec());
                add_into(&mut grads[b.0], g.to_vec());
            }
            Op::Scale { x, s } => add_into(&mut grads[x.0], g.iter().map(|v| v * s).collect()),
            Op::Gelu { x } => {
                let dx = g
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(gi, &xi)| gi * kernels::gelu_grad(xi))
                    .collect();
                add_into(&mut grads[x.0], dx);
            }
            Op::Standardize { x, rstd } => {
                let d = node.value.cols();
                let dx = kernels::standardize_rows_backward(node.value.data(), rstd, g, d);
                add_into(&mut grads[x.0], dx);
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let d = node.value.cols();
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                let mut dxhat = vec![0.0; g.len()];
                for ((grow, xrow), drow) in g
                    .chunks_exact(d)
                    .zip(xhat.chunks_exact(d))
                    .zip(dxhat.chunks_exact_mut(d))
                {
                    for j in 0..d {
                        dgamma[j] += grow[j] * xrow[j];
                        dbeta[j] += grow[j];
                        drow[j] = grow[j] * gam[j];
                    }
                }
                let dx = kernels::standardize_rows_backward(xhat, rstd, &dxhat, d);
                add_into(&mut grads[x.0], dx);
                add_into(&mut grads[gamma.0], dgamma);
                add_into(&mut grads[beta.0], dbeta);
            }
            Op::Softmax { x } => {
                let k = node.value.cols();
                let mut dx = vec![0.0; g.len()];
                for ((yrow, grow), drow) in node
                    .value
                    .data()
                    .chunks_exact(k)
                    .zip(g.chunks_exact(k))
                    .zip(dx.chunks_exact_mut(k))
                {
                    let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for j in 0..k {
                        drow[j] = yrow[j] * (grow[j] - dot);
                    }
                }
                add_into(&mut grads[x.0], dx);
            }
            Op::SliceCols { x, start } => {
                let (n, m) = self.dims(*x);
                let len = node.value.cols();
                let mut dx = vec![0.0; n * m];
                for r in 0..n {
                    dx[r * m + start..r * m + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                add_into(&mut grads[x.0], dx);
            }
            Op::ConcatCols { parts } => {
                let n = node.value.rows();
                let m = node.value.cols();
                let mut off = 0;
                for p in parts {
                    let w = self.dims(*p).1;
                    let mut dp = Vec::with_capacity(n * w);
                    for r in 0..n {
                        dp.extend_from_slice(&g[r * m + off..r * m + off + w]);
                    }
                    add_into(&mut grads[p.0], dp);
                    off += w;
                }
            }
            Op::SliceRows { x, start } => {
                let (n, m) = self.dims(*x);
                let mut dx = vec![0.0; n * m];
                dx[start * m..start * m + g.len()].copy_from_slice(g);
                add_into(&mut grads[x.0], dx);
            }
            Op::ConcatRows { parts } => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    add_into(&mut grads[p.0], g[off..off + len].to_vec());
                    off += len;
                }
            }
            Op::WeightedSum { x, weights } => {
                add_into(&mut grads[x.0], weights.iter().map(|w| w * g[0]).collect());
            }
            Op::SoftmaxBce { logits, labels, probs } => {
                let scale = g[0] / labels.len() as f64;
                let mut dz = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    dz[2 * i + y as usize] -= 1.0;
                }
                dz.iter_mut().for_each(|v| *v *= scale);
                add_into(&mut grads[logits.0], dz);
            }
        }
    }

    /// Copies adjoints of every bound parameter into the store's gradient
    /// slots. Parameters the loss does not depend on get a zero gradient.
    pub fn write_param_grads(&self, grads: &Gradients, store: &mut ParamStore) -> Result<()> {
        for (name, &v) in &self.params {
            let g = grads
                .get(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; self.value(v).len()]);
            store.set_grad(name, g)?;
        }
        Ok(())
    }

    pub fn bound_param(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn linear_examples() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[&[1.0, 2.0]]));
        let w = t.leaf(Tensor::identity(2));
        let b = t.leaf(Tensor::vector(vec![0.0, 0.0]));
        let y = t.linear(x, w, Some(b)).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, 2.0]);

        let x0 = t.leaf(m(&[&[0.0, 0.0]]));
        let w0 = t.leaf(m(&[&[5.0, -2.0], &[7.0, 1.5]]));
        let b0 = t.leaf(Tensor::vector(vec![3.0, -1.0]));
        let y0 = t.linear(x0, w0, Some(b0)).unwrap();
        assert_eq!(t.value(y0).data(), &[3.0, -1.0]);

        // hand multiply: [1,2]·diag(1,2) + [1,1] = [2,5]
        let w2 = t.leaf(m(&[&[1.0, 0.0], &[0.0, 2.0]]));
        let b2 = t.leaf(Tensor::vector(vec![1.0, 1.0]));
        let y2 = t.linear(x, w2, Some(b2)).unwrap();
        assert_eq!(t.value(y2).data(), &[2.0, 5.0]);
    }

    #[test]
    fn linear_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(&[1, 3]));
        let w = t.leaf(Tensor::zeros(&[2, 2]));
        let err = t.linear(x, w, None).unwrap_err().to_string();
        assert!(err.contains("[1, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn linear_backward_by_hand() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[&[1.0, 2.0]]));
        let w = t.leaf(m(&[&[1.0, 0.0], &[0.0, 2.0]]));
        let b = t.leaf(Tensor::vector(vec![1.0, 1.0]));
        let y = t.linear(x, w, Some(b)).unwrap();
        let s = t.weighted_sum(y, vec![1.0, 1.0]).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0, 2.0]);
        assert_eq!(g.get(w).unwrap(), &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(g.get(b).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(&[2, 2]));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn bce_rejects_bad_labels() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor::zeros(&[2, 2]));
        assert!(matches!(t.softmax_bce(z, &[0, 2]), Err(Error::Loss(_))));
    }

    #[test]
    fn bce_uniform_is_ln2() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor::zeros(&[4, 2]));
        let l = t.softmax_bce(z, &[0, 0, 1, 1]).unwrap();
        assert!((t.value(l).data()[0] - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
