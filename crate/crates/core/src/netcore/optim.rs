use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{ParamSet, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn sgd() -> Self {
        OptimizerKind::Sgd { momentum: 0.0 }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: hyperparameters plus per-parameter moment buffers,
/// created lazily on the first step with the parameter's shape.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    first: IndexMap<String, Tensor>,
    second: IndexMap<String, Tensor>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::key(
                "lr",
                format!("learning rate must be finite and >= 0, got {lr}"),
            ));
        }
        let in_unit = |v: f64| (0.0..1.0).contains(&v);
        match kind {
            OptimizerKind::Sgd { momentum } if !in_unit(momentum) => {
                return Err(Error::key("momentum", "must lie in [0, 1)"));
            }
            OptimizerKind::Adam { beta1, beta2, eps } if !(in_unit(beta1) && in_unit(beta2) && eps > 0.0) => {
                return Err(Error::InvalidConfig("adam betas must lie in [0, 1) and eps > 0".into()));
            }
            _ => {}
        }
        Ok(Self {
            kind,
            lr,
            first: IndexMap::new(),
            second: IndexMap::new(),
            steps: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the accumulated gradients. Aborts before
    /// touching any parameter if a gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for (name, p) in params.iter() {
            if !p.grad.is_finite() {
                return Err(Error::NonFiniteGradient {
                    param: name.to_string(),
                });
            }
        }
        self.steps += 1;
        let t = self.steps as i32;
        for (name, p) in params.iter_mut() {
            if p.frozen {
                continue;
            }
            let m = self
                .first
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros_like(&p.value));
            match self.kind {
                OptimizerKind::Sgd { momentum } => {
                    for ((theta, &g), mv) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(m.data_mut()) {
                        *mv = momentum * *mv + g;
                        *theta -= self.lr * *mv;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let v = self
                        .second
                        .entry(name.to_string())
                        .or_insert_with(|| Tensor::zeros_like(&p.value));
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for (((theta, &g), mv), vv) in p
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(p.grad.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *mv = beta1 * *mv + (1.0 - beta1) * g;
                        *vv = beta2 * *vv + (1.0 - beta2) * g * g;
                        let m_hat = *mv / c1;
                        let v_hat = *vv / c2;
                        *theta -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
