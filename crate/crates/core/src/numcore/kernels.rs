//! Slice-level kernels. Matrices are row-major `rows × cols` slices.
//!
//! Both the autodiff tape and the inference paths call these, so a value
//! computed with or without a tape is bit-identical.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `a (n×k) · b (k×m)`
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a (n×k) · bᵀ` where `b` is `m×k`.
pub fn matmul_nt(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let br = &b[j * k..(j + 1) * k];
            out[i * m + j] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · b` where `a` is `n×k` and `b` is `n×m`; result `k×m`.
pub fn matmul_tn(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out[p * m..(p + 1) * m].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `x (n×d_in) · w (d_in×d_out) + b`
pub fn linear(x: &[f64], w: &[f64], b: Option<&[f64]>, n: usize, d_in: usize, d_out: usize) -> Vec<f64> {
    let mut y = matmul(x, w, n, d_in, d_out);
    if let Some(b) = b {
        for row in y.chunks_exact_mut(d_out) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
    }
    y
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

/// Row standardization with population variance. Returns `(xhat, rstd)`
/// where `rstd[r] = 1/sqrt(var_r + eps)`.
pub fn standardize_rows(x: &[f64], d: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() / d;
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; n];
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + eps).sqrt();
        rstd[r] = s;
        for (o, v) in xhat[r * d..(r + 1) * d].iter_mut().zip(row) {
            *o = (v - mean) * s;
        }
    }
    (xhat, rstd)
}

/// Backward of row standardization: given `dxhat`, returns `dx`.
pub fn standardize_rows_backward(xhat: &[f64], rstd: &[f64], dxhat: &[f64], d: usize) -> Vec<f64> {
    let mut dx = vec![0.0; xhat.len()];
    let inv_d = 1.0 / d as f64;
    for (r, &s) in rstd.iter().enumerate() {
        let span = r * d..(r + 1) * d;
        let xh = &xhat[span.clone()];
        let g = &dxhat[span.clone()];
        let mean_g = g.iter().sum::<f64>() * inv_d;
        let mean_gx = g.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() * inv_d;
        for ((o, gi), xi) in dx[span].iter_mut().zip(g).zip(xh) {
            *o = s * (gi - mean_g - xi * mean_gx);
        }
    }
    dx
}

pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], d: usize, eps: f64) -> Vec<f64> {
    let (mut y, _) = standardize_rows(x, d, eps);
    for row in y.chunks_exact_mut(d) {
        for ((v, g), b) in row.iter_mut().zip(gamma).zip(beta) {
            *v = *v * g + b;
        }
    }
    y
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (orow, row) in out.chunks_exact_mut(k).zip(x.chunks_exact(k)) {
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, v) in orow.iter_mut().zip(row) {
            *o = (v - mx).exp();
            sum += *o;
        }
        for o in orow.iter_mut() {
            *o /= sum;
        }
    }
    out
}

/// `log Σ exp(row)` per row.
pub fn logsumexp_rows(x: &[f64], k: usize) -> Vec<f64> {
    x.chunks_exact(k)
        .map(|row| {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
        })
        .collect()
}
