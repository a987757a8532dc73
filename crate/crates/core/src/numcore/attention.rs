use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Tape handles of one multi-head self-attention layer. Weights are
/// `d×d` in `x·W` orientation; head `i` owns columns `i·d/h .. (i+1)·d/h` of
/// the query, key and value projections.
#[derive(Clone, Copy, Debug)]
pub struct MsaVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Scaled dot-product self-attention over the rows of `tokens` (`T×d`),
/// `heads` heads with scale `1/sqrt(d/heads)`, heads concatenated and passed
/// through the output projection.
pub fn msa(tape: &mut Tape, tokens: Var, p: &MsaVars, heads: usize) -> Result<Var> {
    let d = tape.value(tokens).cols();
    if heads == 0 || d % heads != 0 {
        return Err(Error::config(format!(
            "embedding width {d} is not divisible by {heads} heads"
        )));
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = tape.linear(tokens, p.wq, Some(p.bq))?;
    let k = tape.linear(tokens, p.wk, Some(p.bk))?;
    let v = tape.linear(tokens, p.wv, Some(p.bv))?;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice_cols(q, h * dh, dh)?,
                tape.slice_cols(k, h * dh, dh)?,
                tape.slice_cols(v, h * dh, dh)?,
            )
        };
        let scores = tape.matmul_nt(qh, kh)?;
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax(scores);
        outs.push(tape.matmul(attn, vh)?);
    }
    let cat = if heads == 1 {
        outs[0]
    } else {
        tape.concat_cols(&outs)?
    };
    tape.linear(cat, p.wo, Some(p.bo))
}
