use super::AnomalyScorer;
use crate::encoder::{init_tensor, Init};
use crate::error::{Error, Result};
use crate::numcore::{softmax, ParamStore, Rng, Tape, Tensor, Var};

/// Fully connected classifier over `D`-dimensional latent rows: `depth − 1`
/// square `D×D` layers with GELU between them, then a `D×2` output layer.
/// Depth 1 is a single FC layer followed by the two-way softmax.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FcHead {
    pub dim: usize,
    pub depth: usize,
}

impl FcHead {
    pub fn new(dim: usize, depth: usize) -> Result<Self> {
        if depth < 1 || dim < 1 {
            return Err(Error::config(format!(
                "FC head needs depth ≥ 1 and dim ≥ 1, got depth {depth}, dim {dim}"
            )));
        }
        Ok(Self { dim, depth })
    }

    pub fn weight_name(layer: usize) -> String {
        format!("head.layers.{layer}.weight")
    }

    pub fn bias_name(layer: usize) -> String {
        format!("head.layers.{layer}.bias")
    }

    fn layer_out(&self, layer: usize) -> usize {
        if layer + 1 == self.depth {
            2
        } else {
            self.dim
        }
    }

    pub fn param_specs(&self) -> Vec<(String, Vec<usize>, Init)> {
        (0..self.depth)
            .flat_map(|j| {
                let out = self.layer_out(j);
                [
                    (Self::weight_name(j), vec![self.dim, out], Init::Normal),
                    (Self::bias_name(j), vec![out], Init::Zeros),
                ]
            })
            .collect()
    }

    pub fn init_params(&self, rng: &mut Rng) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, shape, init) in self.param_specs() {
            store.insert(name, init_tensor(&shape, init, rng));
        }
        store.round_all_to_f32();
        store
    }

    pub fn forward_on_tape(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        if tape.value(x).cols() != self.dim {
            return Err(Error::dim(format!(
                "FC head of width {} applied to features {:?}",
                self.dim,
                tape.value(x).shape()
            )));
        }
        let mut h = x;
        for j in 0..self.depth {
            let w = tape.param(store, &Self::weight_name(j))?;
            let b = tape.param(store, &Self::bias_name(j))?;
            h = tape.linear(h, w, Some(b))?;
            if j + 1 < self.depth {
                h = tape.gelu(h);
            }
        }
        Ok(h)
    }

    /// Logits `M×2` for `M×D` features.
    pub fn fc_forward(&self, feats: &Tensor, store: &ParamStore) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.leaf(feats.clone());
        let y = self.forward_on_tape(&mut tape, store, x)?;
        Ok(tape.value(y).clone())
    }
}

/// FC head bound to its parameters. The anomaly score is the softmax mass on
/// class 1 (pseudo-negative).
#[derive(Clone, Copy, Debug)]
pub struct FcScorer<'a> {
    pub head: &'a FcHead,
    pub params: &'a ParamStore,
}

impl AnomalyScorer for FcScorer<'_> {
    fn score_rows(&self, latent: &Tensor) -> Result<Vec<f64>> {
        let logits = self.head.fc_forward(latent, self.params)?;
        let p = softmax(&logits);
        Ok(p.data().chunks_exact(2).map(|r| r[1]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_gives_uniform_probabilities() {
        let head = FcHead::new(3, 1).unwrap();
        let mut store = ParamStore::new();
        store.insert(FcHead::weight_name(0), Tensor::zeros(&[3, 2]));
        store.insert(FcHead::bias_name(0), Tensor::zeros(&[2]));
        let x = Tensor::from_rows(&[[1.0, -2.0, 3.0]]).unwrap();
        let logits = head.fc_forward(&x, &store).unwrap();
        assert_eq!(logits.data(), &[0.0, 0.0]);
        let s = FcScorer { head: &head, params: &store }.score_rows(&x).unwrap();
        assert_eq!(s, vec![0.5]);
    }

    #[test]
    fn identity_head_passes_features() {
        let head = FcHead::new(2, 1).unwrap();
        let mut store = ParamStore::new();
        store.insert(FcHead::weight_name(0), Tensor::identity(2));
        store.insert(FcHead::bias_name(0), Tensor::zeros(&[2]));
        let x = Tensor::from_rows(&[[3.0, -1.0]]).unwrap();
        assert_eq!(head.fc_forward(&x, &store).unwrap().data(), &[3.0, -1.0]);
    }

    #[test]
    fn shapes_follow_depth() {
        let head = FcHead::new(5, 3).unwrap();
        let specs = head.param_specs();
        assert_eq!(specs.len(), 6);
        assert_eq!(specs[0].1, vec![5, 5]);
        assert_eq!(specs[2].1, vec![5, 5]);
        assert_eq!(specs[4].1, vec![5, 2]);
        assert!(FcHead::new(5, 0).is_err());
    }

    #[test]
    fn width_mismatch_is_error() {
        let head = FcHead::new(4, 1).unwrap();
        let store = head.init_params(&mut Rng::new(0));
        assert!(head.fc_forward(&Tensor::zeros(&[2, 3]), &store).is_err());
    }
}
