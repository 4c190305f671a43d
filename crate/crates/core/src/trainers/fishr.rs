use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::models::Model;
use crate::netcore::{softmax_cross_entropy, Mlp, ParamSet, Tensor};
use crate::tasks::Batch;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FishrConfig {
    pub gamma_reg: f64,
    /// Weight of the previous estimate in the moving average of `v_d`.
    pub ema_decay: f64,
    /// Central-difference step for the penalty gradient.
    pub fd_step: f64,
}

impl Default for FishrConfig {
    fn default() -> Self {
        Self {
            gamma_reg: 0.1,
            ema_decay: 0.9,
            fd_step: 1e-6,
        }
    }
}

impl FishrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_reg.is_finite() && self.gamma_reg >= 0.0) {
            return Err(Error::key("gamma_reg_fishr", "must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::key("fishr_ema", "must be in [0, 1)"));
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(Error::key("fishr_fd_step", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Moving averages of the per-domain gradient variances, keyed by domain id.
#[derive(Debug, Clone, Default)]
pub struct FishrState {
    ema: BTreeMap<usize, Vec<f64>>,
}

impl FishrState {
    pub fn get(&self, domain: usize) -> Option<&[f64]> {
        self.ema.get(&domain).map(Vec::as_slice)
    }
}

/// Per-sample gradients of the class loss with respect to the head
/// parameters, one flattened row per sample.
pub fn per_sample_head_grads(head: &Mlp, params: &ParamSet, h: &Tensor, labels: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut scratch = params.clone();
    let mut out = Vec::with_capacity(labels.len());
    for (i, &y) in labels.iter().enumerate() {
        scratch.zero_grad();
        let row = h.select_rows(&[i]);
        let trace = head.forward(&scratch, &row)?;
        let (_, g) = softmax_cross_entropy(trace.logits(), &[y])?;
        head.backward(&mut scratch, &trace, &g)?;
        out.push(scratch.flat_grads());
    }
    Ok(out)
}

/// Element-wise population variance of the rows.
pub fn grad_variance(grads: &[Vec<f64>]) -> Vec<f64> {
    let n = grads.len() as f64;
    let p = grads.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; p];
    for g in grads {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; p];
    for g in grads {
        for ((s, v), m) in var.iter_mut().zip(g).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    var
}

/// `(1/|D|)·Σ_d ‖v_d − v̄‖²` with `v̄` the mean over domains.
pub fn fishr_penalty(variances: &[Vec<f64>]) -> f64 {
    let k = variances.len();
    if k == 0 {
        return 0.0;
    }
    let p = variances[0].len();
    let mut mean = vec![0.0; p];
    for v in variances {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    let total: f64 = variances
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum();
    total / k as f64
}

fn head_params(model: &Model) -> Result<ParamSet> {
    let mut set = ParamSet::new(model.params().seed());
    for name in model.class_head_params() {
        set.insert(name.clone(), model.params().value(&name)?.clone())?;
    }
    Ok(set)
}

struct Domains<'a> {
    ids: Vec<usize>,
    inputs: Vec<Tensor>,
    labels: Vec<&'a [usize]>,
}

fn smoothed_variances(
    head: &Mlp,
    params: &ParamSet,
    d: &Domains<'_>,
    state: &FishrState,
    decay: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(d.ids.len());
    for ((id, h), y) in d.ids.iter().zip(&d.inputs).zip(&d.labels) {
        let now = grad_variance(&per_sample_head_grads(head, params, h, y)?);
        out.push(match state.get(*id) {
            Some(prev) => prev
                .iter()
                .zip(&now)
                .map(|(p, n)| decay * p + (1.0 - decay) * n)
                .collect(),
            None => now,
        });
    }
    Ok(out)
}

/// Variance-matching penalty over the class head. Updates the moving
/// averages in `state`. When `weight` is given, a central-difference
/// gradient of the penalty with respect to the head parameters (features
/// and stored averages held fixed) is added into `model`'s buffers.
pub fn fishr_value(
    model: &mut Model,
    batches: &[&Batch],
    cfg: &FishrConfig,
    state: &mut FishrState,
    weight: Option<f64>,
) -> Result<f64> {
    if let Some(b) = batches.iter().find(|b| b.len() < 2) {
        return Err(Error::Shape(format!(
            "fishr needs >= 2 samples per domain batch, domain {} has {}",
            b.domain,
            b.len()
        )));
    }
    let head = model.class_head().clone();
    let mut hp = head_params(model)?;
    let d = Domains {
        ids: batches.iter().map(|b| b.domain).collect(),
        inputs: batches
            .iter()
            .map(|b| model.class_head_input(&b.features))
            .collect::<Result<_>>()?,
        labels: batches.iter().map(|b| b.labels.as_slice()).collect(),
    };
    let vars = smoothed_variances(&head, &hp, &d, state, cfg.ema_decay)?;
    let value = fishr_penalty(&vars);

    if let Some(w) = weight {
        let names: Vec<String> = hp.names().map(str::to_string).collect();
        let h = cfg.fd_step;
        for name in &names {
            let n = hp.value(name)?.len();
            for j in 0..n {
                let orig = hp.value(name)?.data()[j];
                hp.value_mut(name)?.data_mut()[j] = orig + h;
                let up = fishr_penalty(&smoothed_variances(&head, &hp, &d, state, cfg.ema_decay)?);
                hp.value_mut(name)?.data_mut()[j] = orig - h;
                let down = fishr_penalty(&smoothed_variances(&head, &hp, &d, state, cfg.ema_decay)?);
                hp.value_mut(name)?.data_mut()[j] = orig;
                model.params_mut().grad_mut(name)?.data_mut()[j] += w * (up - down) / (2.0 * h);
            }
        }
    }
    for (id, v) in d.ids.iter().zip(vars) {
        state.ema.insert(*id, v);
    }
    Ok(value)
}
