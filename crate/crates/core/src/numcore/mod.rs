//! Differentiable kernels, parameter storage, Adam and the deterministic RNG.

mod adam;
mod attention;
pub mod gradcheck;
pub mod kernels;
mod params;
mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use attention::{msa, MsaVars};
pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{MomentState, ParamStore};
pub use rng::{derive_seed, Rng};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Row-wise softmax of an `N×k` matrix.
pub fn softmax(logits: &Tensor) -> Tensor {
    let k = logits.cols();
    Tensor::matrix(logits.rows(), k, kernels::softmax_rows(logits.data(), k))
        .expect("shape preserved")
}

pub fn gelu(x: &Tensor) -> Tensor {
    Tensor::new(
        x.shape().to_vec(),
        x.data().iter().map(|&v| kernels::gelu(v)).collect(),
    )
    .expect("shape preserved")
}

pub fn layer_norm(x: &Tensor, gamma: &[f64], beta: &[f64], eps: f64) -> crate::Result<Tensor> {
    let d = x.cols();
    if gamma.len() != d || beta.len() != d {
        return Err(crate::Error::Dimension(format!(
            "layer_norm over {d} columns with {} gains and {} offsets",
            gamma.len(),
            beta.len()
        )));
    }
    if eps <= 0.0 {
        return Err(crate::Error::Config(format!("eps must be > 0, got {eps}")));
    }
    Tensor::matrix(x.rows(), d, kernels::layer_norm(x.data(), gamma, beta, d, eps))
}

/// `x·W + b` without a tape.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> crate::Result<Tensor> {
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
    let y = tape.linear(xv, wv, Some(bv))?;
    Ok(tape.value(y).clone())
}
