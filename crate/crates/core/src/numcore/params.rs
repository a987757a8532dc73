use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam moment estimates for one tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

/// Named parameters with per-entry trainable flags and optimizer state.
///
/// Entries are kept in name order, which fixes the iteration order of
/// initialization, optimizer updates and checkpoint layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
    trainable: BTreeMap<String, bool>,
    opt_state: BTreeMap<String, MomentState>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts (or replaces) a trainable entry.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        self.opt_state.remove(&name);
        self.trainable.insert(name.clone(), true);
        self.entries.insert(name, tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.trainable.get(name).copied().unwrap_or(false)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        match self.trainable.get_mut(name) {
            Some(flag) => {
                *flag = trainable;
                Ok(())
            }
            None => Err(Error::config(format!("no parameter named `{name}`"))),
        }
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.trainable
            .iter()
            .filter(|(_, &t)| t)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn set_grad(&mut self, name: &str, grad: Vec<f64>) -> Result<()> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::config(format!("no parameter named `{name}`")))?
            .set_grad(grad)
    }

    pub fn zero_grads(&mut self) {
        self.entries.values_mut().for_each(Tensor::clear_grad);
    }

    pub fn opt_state(&self, name: &str) -> Option<&MomentState> {
        self.opt_state.get(name)
    }

    pub(crate) fn opt_state_entry(&mut self, name: &str, len: usize) -> &mut MomentState {
        self.opt_state
            .entry(name.to_string())
            .or_insert_with(|| MomentState {
                m: vec![0.0; len],
                v: vec![0.0; len],
                t: 0,
            })
    }

    pub(crate) fn entries_mut(&mut self) -> &mut BTreeMap<String, Tensor> {
        &mut self.entries
    }

    /// Rounds every trainable entry to `f32` precision. Stores kept in this
    /// state survive a checkpoint round trip bit-exactly.
    pub fn round_trainable_to_f32(&mut self) {
        for (name, t) in &mut self.entries {
            if self.trainable.get(name).copied().unwrap_or(false) {
                t.round_to_f32();
            }
        }
    }

    pub fn round_all_to_f32(&mut self) {
        self.entries.values_mut().for_each(Tensor::round_to_f32);
    }

    /// True when every entry has the same shape and bit pattern in `other`.
    pub fn bits_eq(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .all(|(k, v)| other.entries.get(k).is_some_and(|o| v.bits_eq(o)))
    }

    /// Copies `other`'s entries (values and trainable flags) into this store.
    pub fn extend_from(&mut self, other: ParamStore) {
        for (k, v) in other.entries {
            let t = other.trainable.get(&k).copied().unwrap_or(true);
            self.trainable.insert(k.clone(), t);
            self.opt_state.remove(&k);
            self.entries.insert(k, v);
        }
    }

    pub fn total_elements(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }
}
