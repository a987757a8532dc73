use crate::error::{Error, Result};
use crate::numcore::{ParamStore, Rng, Tensor};

/// Standard deviation of the normal initializer for weights, CLS token and
/// positional embeddings.
pub const INIT_STD: f64 = 0.02;

/// ViT extractor hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub image_size: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    /// Number of encoder blocks.
    pub depth: usize,
    pub heads: usize,
    /// Hidden expansion of the block MLP.
    pub mlp_ratio: usize,
    pub latent_dim: usize,
    pub ln_eps: f64,
    /// Epsilon of the per-sample instance normalization of latent features.
    pub in_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::vit_tiny_test(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
}

impl EncoderConfig {
    /// Desk-scale preset: 32×32 input, 8×8 patches, width 64, two blocks.
    pub fn vit_tiny_test(channels: usize) -> Self {
        Self {
            image_size: 32,
            channels,
            patch_size: 8,
            embed_dim: 64,
            depth: 2,
            heads: 4,
            mlp_ratio: 4,
            latent_dim: 64,
            ln_eps: 1e-5,
            in_eps: 1e-5,
        }
    }

    /// ViT-Base/16 geometry with a 1000-wide latent projection.
    pub fn vit_base() -> Self {
        Self {
            image_size: 224,
            channels: 3,
            patch_size: 16,
            embed_dim: 768,
            depth: 12,
            heads: 12,
            mlp_ratio: 4,
            latent_dim: 1000,
            ln_eps: 1e-6,
            in_eps: 1e-5,
        }
    }

    /// ViT-Large/16 geometry with a 1000-wide latent projection.
    pub fn vit_large() -> Self {
        Self {
            embed_dim: 1024,
            depth: 24,
            heads: 16,
            ..Self::vit_base()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.image_size == 0 || self.channels == 0 {
            return fail("image size, channels and patch size must be positive".into());
        }
        if self.image_size % self.patch_size != 0 {
            return fail(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.heads == 0 || self.embed_dim == 0 || self.embed_dim % self.heads != 0 {
            return fail(format!(
                "embed dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            ));
        }
        if self.depth < 1 || self.latent_dim < 1 || self.mlp_ratio < 1 {
            return fail("depth, latent dim and mlp ratio must be at least 1".into());
        }
        if self.ln_eps <= 0.0 || self.in_eps <= 0.0 {
            return fail("normalization eps must be positive".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Flattened patch length `C·P·P`.
    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    pub fn hidden_dim(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }

    /// Every encoder tensor in initialization order: backbone first, latent
    /// projection last, so the backbone draw does not depend on `latent_dim`.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>, Init)> {
        let e = self.embed_dim;
        let mut specs = vec![
            (names::PATCH_W.to_string(), vec![self.patch_dim(), e], Init::Normal),
            (names::PATCH_B.to_string(), vec![e], Init::Zeros),
            (names::CLS.to_string(), vec![e], Init::Normal),
            (names::POS.to_string(), vec![self.num_patches() + 1, e], Init::Normal),
        ];
        for i in 0..self.depth {
            let b = names::Block(i);
            specs.push((b.norm1_w(), vec![e], Init::Ones));
            specs.push((b.norm1_b(), vec![e], Init::Zeros));
            for proj in ["query", "key", "value", "out"] {
                specs.push((b.attn_w(proj), vec![e, e], Init::Normal));
                specs.push((b.attn_b(proj), vec![e], Init::Zeros));
            }
            specs.push((b.norm2_w(), vec![e], Init::Ones));
            specs.push((b.norm2_b(), vec![e], Init::Zeros));
            specs.push((b.fc_w(1), vec![e, self.hidden_dim()], Init::Normal));
            specs.push((b.fc_b(1), vec![self.hidden_dim()], Init::Zeros));
            specs.push((b.fc_w(2), vec![self.hidden_dim(), e], Init::Normal));
            specs.push((b.fc_b(2), vec![e], Init::Zeros));
        }
        specs.push((names::NORM_W.to_string(), vec![e], Init::Ones));
        specs.push((names::NORM_B.to_string(), vec![e], Init::Zeros));
        specs.push((names::LATENT_W.to_string(), vec![e, self.latent_dim], Init::Normal));
        specs.push((names::LATENT_B.to_string(), vec![self.latent_dim], Init::Zeros));
        specs
    }

    /// Fresh encoder parameters. Values are rounded to `f32` so the store is
    /// exactly representable in a checkpoint.
    pub fn init_params(&self, rng: &mut Rng) -> Result<ParamStore> {
        self.validate()?;
        let mut store = ParamStore::new();
        for (name, shape, init) in self.param_specs() {
            store.insert(name, init_tensor(&shape, init, rng));
        }
        store.round_all_to_f32();
        Ok(store)
    }
}

pub(crate) fn init_tensor(shape: &[usize], init: Init, rng: &mut Rng) -> Tensor {
    match init {
        Init::Zeros => Tensor::zeros(shape),
        Init::Ones => Tensor::filled(shape, 1.0),
        Init::Normal => {
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.gaussian(0.0, INIT_STD)).collect();
            Tensor::new(shape.to_vec(), data).expect("sized")
        }
    }
}

/// Tensor naming scheme: `encoder.<part>[.<index>.<sublayer>].<weight|bias>`.
pub mod names {
    pub const PATCH_W: &str = "encoder.patch_embed.weight";
    pub const PATCH_B: &str = "encoder.patch_embed.bias";
    pub const CLS: &str = "encoder.cls_token";
    pub const POS: &str = "encoder.pos_embed";
    pub const NORM_W: &str = "encoder.norm.weight";
    pub const NORM_B: &str = "encoder.norm.bias";
    pub const LATENT_W: &str = "encoder.latent.weight";
    pub const LATENT_B: &str = "encoder.latent.bias";
    pub const PREFIX: &str = "encoder.";

    #[derive(Clone, Copy, Debug)]
    pub struct Block(pub usize);

    impl Block {
        fn p(&self, rest: &str) -> String {
            format!("encoder.blocks.{}.{rest}", self.0)
        }
        pub fn norm1_w(&self) -> String {
            self.p("norm1.weight")
        }
        pub fn norm1_b(&self) -> String {
            self.p("norm1.bias")
        }
        pub fn norm2_w(&self) -> String {
            self.p("norm2.weight")
        }
        pub fn norm2_b(&self) -> String {
            self.p("norm2.bias")
        }
        /// `proj` is one of `query`, `key`, `value`, `out`.
        pub fn attn_w(&self, proj: &str) -> String {
            self.p(&format!("attn.{proj}.weight"))
        }
        pub fn attn_b(&self, proj: &str) -> String {
            self.p(&format!("attn.{proj}.bias"))
        }
        pub fn fc_w(&self, i: usize) -> String {
            self.p(&format!("mlp.fc{i}.weight"))
        }
        pub fn fc_b(&self, i: usize) -> String {
            self.p(&format!("mlp.fc{i}.bias"))
        }
    }
}
