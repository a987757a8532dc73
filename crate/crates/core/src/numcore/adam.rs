use super::params::ParamStore;
use crate::error::{Error, Result};

/// Adam hyperparameters. Weight decay is the coupled L2 form: `wd·θ` is added
/// to the gradient before the moment updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every trainable entry. Consumes the
/// gradients; frozen entries are neither read nor written.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
    let names = store.trainable_names();
    // Validate first so a failing call leaves the store untouched.
    for name in &names {
        if store.get(name).and_then(|t| t.grad()).is_none() {
            return Err(Error::Training(format!(
                "trainable parameter `{name}` has no gradient"
            )));
        }
    }
    for name in &names {
        let mut tensor = store.entries_mut().remove(name).expect("validated");
        let grad = tensor.take_grad().expect("validated");
        let state = store.opt_state_entry(name, tensor.len());
        state.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
        for (((theta, g), m), v) in tensor
            .data_mut()
            .iter_mut()
            .zip(grad)
            .zip(state.m.iter_mut())
            .zip(state.v.iter_mut())
        {
            let g = g + cfg.weight_decay * *theta;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        store.entries_mut().insert(name.clone(), tensor);
    }
    Ok(())
}
