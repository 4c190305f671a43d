use serde::{Deserialize, Serialize};

use crate::models::Model;
use crate::tasks::Batch;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MldgConfig {
    pub gamma_reg: f64,
    /// Step size of the virtual update on the meta-source domains.
    pub inner_lr: f64,
}

impl Default for MldgConfig {
    fn default() -> Self {
        Self {
            gamma_reg: 0.1,
            inner_lr: 0.01,
        }
    }
}

impl MldgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_reg.is_finite() && self.gamma_reg >= 0.0) {
            return Err(Error::key("gamma_reg_mldg", "must be finite and >= 0"));
        }
        if !(self.inner_lr.is_finite() && self.inner_lr >= 0.0) {
            return Err(Error::key("mldg_inner_lr", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Index of the meta-target domain at a given step.
pub fn holdout_index(step: u64, num_domains: usize) -> usize {
    (step % num_domains as u64) as usize
}

/// First-order meta-learning term. A throwaway copy takes one plain
/// gradient step on the mean class loss of `sources`; the value is the
/// class loss of that copy on `target`. When `weight` is given, the copy's
/// gradient on `target` is added into `model`'s buffers scaled by `weight`.
pub fn mldg_value(
    model: &mut Model,
    sources: &[&Batch],
    target: &Batch,
    cfg: &MldgConfig,
    weight: Option<f64>,
) -> Result<f64> {
    if sources.is_empty() {
        return Err(Error::InvalidConfig("mldg requires ≥2 training domains".into()));
    }
    let mut virt = model.clone();
    virt.params_mut().zero_grad();
    let w = 1.0 / sources.len() as f64;
    for b in sources {
        virt.accumulate_class_loss(&b.features, &b.labels, w)?;
    }
    for (_, p) in virt.params_mut().iter_mut() {
        if p.frozen {
            continue;
        }
        for (v, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
            *v -= cfg.inner_lr * g;
        }
    }
    virt.params_mut().zero_grad();
    let value = virt.accumulate_class_loss(&target.features, &target.labels, 1.0)?;
    if let Some(w) = weight {
        model.params_mut().add_grads_from(virt.params(), w)?;
    }
    Ok(value)
}
