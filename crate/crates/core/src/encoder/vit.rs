use super::config::{names, EncoderConfig};
use crate::error::{Error, Result};
use crate::numcore::{msa, MsaVars, ParamStore, Tape, Tensor, Var};
use crate::par::Exec;

/// Instance-normalized latent features, one row per image.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBatch {
    pub features: Tensor,
    pub normalized: bool,
}

impl LatentBatch {
    pub fn rows(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Splits a `C×H×W` image into non-overlapping `P×P` patches in raster
/// order. Each row is one patch flattened channel-major, then row, then
/// column, i.e. the layout of a `C×P×P` convolution kernel.
pub fn extract_patches(image: &Tensor, patch: usize) -> Result<Tensor> {
    let [c, h, w] = image.shape() else {
        return Err(Error::dim(format!(
            "expected a C×H×W image, got shape {:?}",
            image.shape()
        )));
    };
    let (c, h, w) = (*c, *h, *w);
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::config(format!(
            "image {h}×{w} is not divisible into {patch}×{patch} patches"
        )));
    }
    let (gh, gw) = (h / patch, w / patch);
    let src = image.data();
    let mut out = Vec::with_capacity(c * h * w);
    for py in 0..gh {
        for px in 0..gw {
            for ch in 0..c {
                for dy in 0..patch {
                    let row = ch * h * w + (py * patch + dy) * w + px * patch;
                    out.extend_from_slice(&src[row..row + patch]);
                }
            }
        }
    }
    Tensor::matrix(gh * gw, c * patch * patch, out)
}

/// Patch embedding: strided `P×P` convolution expressed as a shared linear
/// map over flattened patches. `weight` is `(C·P·P)×E`.
pub fn patchify(image: &Tensor, patch: usize, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let patches = extract_patches(image, patch)?;
    crate::numcore::linear(&patches, weight, bias)
}

/// `[cls; patches] + pos`
pub fn build_tokens(patches: &Tensor, cls: &Tensor, pos: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (p, c, q) = (
        tape.leaf(patches.clone()),
        tape.leaf(cls.clone()),
        tape.leaf(pos.clone()),
    );
    let y = tokens_on_tape(&mut tape, p, c, q)?;
    Ok(tape.value(y).clone())
}

fn tokens_on_tape(tape: &mut Tape, patches: Var, cls: Var, pos: Var) -> Result<Var> {
    let t = tape.value(patches).rows();
    let e = tape.value(cls).len();
    if tape.value(patches).len() > 0 && tape.value(patches).cols() != e {
        return Err(Error::dim(format!(
            "patch tokens {:?} do not match CLS width {e}",
            tape.value(patches).shape()
        )));
    }
    if tape.value(pos).rows() != t + 1 || tape.value(pos).cols() != e {
        return Err(Error::config(format!(
            "positional embedding {:?} does not fit {} tokens of width {e}",
            tape.value(pos).shape(),
            t + 1
        )));
    }
    let seq = if t == 0 {
        tape.concat_rows(&[cls])?
    } else {
        tape.concat_rows(&[cls, patches])?
    };
    tape.add(seq, pos)
}

/// One pre-norm encoder block on a tape:
/// `a = x + MSA(LN(x))`, `y = a + fc2(GELU(fc1(LN(a))))`.
pub fn encoder_block_on_tape(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &EncoderConfig,
    block: usize,
    x: Var,
) -> Result<Var> {
    let b = names::Block(block);
    let mut p = |name: String| tape.param(store, &name);
    let (n1w, n1b) = (p(b.norm1_w())?, p(b.norm1_b())?);
    let attn = MsaVars {
        wq: p(b.attn_w("query"))?,
        bq: p(b.attn_b("query"))?,
        wk: p(b.attn_w("key"))?,
        bk: p(b.attn_b("key"))?,
        wv: p(b.attn_w("value"))?,
        bv: p(b.attn_b("value"))?,
        wo: p(b.attn_w("out"))?,
        bo: p(b.attn_b("out"))?,
    };
    let (n2w, n2b) = (p(b.norm2_w())?, p(b.norm2_b())?);
    let (f1w, f1b, f2w, f2b) = (p(b.fc_w(1))?, p(b.fc_b(1))?, p(b.fc_w(2))?, p(b.fc_b(2))?);

    let h = tape.layer_norm(x, n1w, n1b, cfg.ln_eps)?;
    let h = msa(tape, h, &attn, cfg.heads)?;
    let a = tape.add(x, h)?;
    let h = tape.layer_norm(a, n2w, n2b, cfg.ln_eps)?;
    let h = tape.linear(h, f1w, Some(f1b))?;
    let h = tape.gelu(h);
    let h = tape.linear(h, f2w, Some(f2b))?;
    tape.add(a, h)
}

/// Plain evaluation of block `block` on a `(T+1)×E` token matrix.
pub fn encoder_block(tokens: &Tensor, store: &ParamStore, cfg: &EncoderConfig, block: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.leaf(tokens.clone());
    let y = encoder_block_on_tape(&mut tape, store, cfg, block, x)?;
    Ok(tape.value(y).clone())
}

fn check_image(image: &Tensor, cfg: &EncoderConfig) -> Result<()> {
    let want = [cfg.channels, cfg.image_size, cfg.image_size];
    if image.shape() != want {
        return Err(Error::dim(format!(
            "image shape {:?} does not match encoder input {want:?}",
            image.shape()
        )));
    }
    Ok(())
}

/// Backbone on a tape: tokens → blocks → final LN → CLS row (`1×E`).
pub fn backbone_on_tape(tape: &mut Tape, store: &ParamStore, cfg: &EncoderConfig, image: &Tensor) -> Result<Var> {
    check_image(image, cfg)?;
    let patches = tape.leaf(extract_patches(image, cfg.patch_size)?);
    let pw = tape.param(store, names::PATCH_W)?;
    let pb = tape.param(store, names::PATCH_B)?;
    let emb = tape.linear(patches, pw, Some(pb))?;
    let cls = tape.param(store, names::CLS)?;
    let pos = tape.param(store, names::POS)?;
    let mut x = tokens_on_tape(tape, emb, cls, pos)?;
    for i in 0..cfg.depth {
        x = encoder_block_on_tape(tape, store, cfg, i, x)?;
    }
    let nw = tape.param(store, names::NORM_W)?;
    let nb = tape.param(store, names::NORM_B)?;
    let x = tape.layer_norm(x, nw, nb, cfg.ln_eps)?;
    tape.slice_rows(x, 0, 1)
}

/// Latent projection `E→D` followed by per-row instance normalization.
pub fn project_on_tape(tape: &mut Tape, store: &ParamStore, cfg: &EncoderConfig, feats: Var) -> Result<Var> {
    let w = tape.param(store, names::LATENT_W)?;
    let b = tape.param(store, names::LATENT_B)?;
    let z = tape.linear(feats, w, Some(b))?;
    tape.standardize(z, cfg.in_eps)
}

/// Full extractor on one tape for a batch: `B×D` latent rows.
pub fn encode_on_tape(tape: &mut Tape, store: &ParamStore, cfg: &EncoderConfig, images: &[Tensor]) -> Result<Var> {
    let rows = images
        .iter()
        .map(|im| backbone_on_tape(tape, store, cfg, im))
        .collect::<Result<Vec<_>>>()?;
    let feats = tape.concat_rows(&rows)?;
    project_on_tape(tape, store, cfg, feats)
}

/// Final-LN CLS rows for a batch of images (`B×E`), one independent forward
/// pass per image.
pub fn backbone_features(store: &ParamStore, cfg: &EncoderConfig, images: &[Tensor], exec: Exec) -> Result<Tensor> {
    cfg.validate()?;
    let rows = exec.map(images, |im| -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let v = backbone_on_tape(&mut tape, store, cfg, im)?;
        Ok(tape.value(v).data().to_vec())
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(rows.len() * cfg.embed_dim);
    rows.iter().for_each(|r| data.extend_from_slice(r));
    Tensor::matrix(images.len(), cfg.embed_dim, data)
}

/// Projection and instance norm applied to precomputed backbone features.
pub fn project_features(store: &ParamStore, cfg: &EncoderConfig, feats: &Tensor) -> Result<LatentBatch> {
    let mut tape = Tape::new();
    let f = tape.leaf(feats.clone());
    let z = project_on_tape(&mut tape, store, cfg, f)?;
    Ok(LatentBatch {
        features: tape.value(z).clone(),
        normalized: true,
    })
}

/// Images → instance-normalized `B×D` latent features.
pub fn extract_latent(images: &[Tensor], cfg: &EncoderConfig, store: &ParamStore, exec: Exec) -> Result<LatentBatch> {
    if images.is_empty() {
        return Err(Error::dim("extract_latent on an empty batch"));
    }
    let feats = backbone_features(store, cfg, images, exec)?;
    project_features(store, cfg, &feats)
}

/// Freezes every encoder tensor except the latent projection. Other
/// (non-encoder) entries keep their flags.
pub fn freeze_backbone(store: &mut ParamStore) {
    let names: Vec<String> = store
        .names()
        .filter(|n| n.starts_with(names::PREFIX))
        .map(String::from)
        .collect();
    for n in names {
        let trainable = n == names::LATENT_W || n == names::LATENT_B;
        store.set_trainable(&n, trainable).expect("name from store");
    }
}
