use serde::{Deserialize, Serialize};

use crate::models::Model;
use crate::netcore::Tensor;
use crate::tasks::Batch;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialConfig {
    pub gamma_reg: f64,
    pub n_steps: usize,
    pub step_size: f64,
    pub epsilon: f64,
}

impl Default for DialConfig {
    fn default() -> Self {
        Self {
            gamma_reg: 0.1,
            n_steps: 3,
            step_size: 0.1,
            epsilon: 0.3,
        }
    }
}

impl DialConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_reg.is_finite() && self.gamma_reg >= 0.0) {
            return Err(Error::key("gamma_reg_dial", "must be finite and >= 0"));
        }
        if self.n_steps == 0 {
            return Err(Error::key("dial_steps", "must be >= 1"));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::key("dial_step_size", "must be finite and > 0"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::key("dial_epsilon", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Sign-gradient ascent on the class loss, projected onto the ℓ∞ ball of
/// radius `epsilon` around `x`.
pub fn adversarial_input(model: &Model, batch: &Batch, cfg: &DialConfig) -> Result<Tensor> {
    let x = &batch.features;
    let mut adv = x.clone();
    for _ in 0..cfg.n_steps {
        let (_, g) = model.class_loss_input_grad(&adv, &batch.labels)?;
        for ((a, &x0), &gi) in adv.data_mut().iter_mut().zip(x.data()).zip(g.data()) {
            let s = if gi > 0.0 {
                1.0
            } else if gi < 0.0 {
                -1.0
            } else {
                0.0
            };
            *a = (*a + cfg.step_size * s).clamp(x0 - cfg.epsilon, x0 + cfg.epsilon);
        }
    }
    Ok(adv)
}

/// Class loss on the adversarial batch. When `weight` is given, its
/// gradient through the model parameters (with `x'` held fixed) is added
/// into the gradient buffers scaled by `weight`.
pub fn dial_value(model: &mut Model, batch: &Batch, cfg: &DialConfig, weight: Option<f64>) -> Result<f64> {
    let adv = adversarial_input(model, batch, cfg)?;
    match weight {
        Some(w) => model.accumulate_class_loss(&adv, &batch.labels, w),
        None => model.class_loss(&adv, &batch.labels),
    }
}
