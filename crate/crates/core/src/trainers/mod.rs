//! Trainers: the update operator. A trainer feeds per-domain batches into
//! a model, appends its own regularizers to the model's, and takes one
//! optimizer step on the combined loss.
//!
//! Decorators are stored innermost first. The chain written `mldg_dial`
//! (MLDG decorated with DIAL) applies DIAL first and MLDG last, so its
//! report lists `[model regs…, "dial", "mldg"]`.

mod dial;
mod fishr;
mod mldg;

pub use dial::{adversarial_input, dial_value, DialConfig};
pub use fishr::{fishr_penalty, fishr_value, grad_variance, per_sample_head_grads, FishrConfig, FishrState};
pub use mldg::{holdout_index, mldg_value, MldgConfig};

use serde::{Deserialize, Serialize};

use crate::models::{LossReport, Model};
use crate::netcore::Optimizer;
use crate::tasks::{domain_steps, Batch, DomainView, SplitIndices, Task};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decorator {
    Dial(DialConfig),
    Mldg(MldgConfig),
    Fishr(FishrConfig),
}

impl Decorator {
    pub fn name(&self) -> &'static str {
        match self {
            Decorator::Dial(_) => "dial",
            Decorator::Mldg(_) => "mldg",
            Decorator::Fishr(_) => "fishr",
        }
    }

    pub fn gamma_reg(&self) -> f64 {
        match self {
            Decorator::Dial(c) => c.gamma_reg,
            Decorator::Mldg(c) => c.gamma_reg,
            Decorator::Fishr(c) => c.gamma_reg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Decorator::Dial(c) => c.validate(),
            Decorator::Mldg(c) => c.validate(),
            Decorator::Fishr(c) => c.validate(),
        }
    }
}

/// A decoration chain; empty means the basic trainer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainerConfig {
    /// Innermost first.
    pub decorators: Vec<Decorator>,
}

impl TrainerConfig {
    pub fn basic() -> Self {
        Self::default()
    }

    /// Wraps `inner` in `outer`; the outer term is appended after the inner ones.
    pub fn decorate(outer: Decorator, inner: TrainerConfig) -> Self {
        let mut decorators = inner.decorators;
        decorators.push(outer);
        Self { decorators }
    }

    /// Chain name in written order, outermost first.
    pub fn name(&self) -> String {
        if self.decorators.is_empty() {
            return "basic".into();
        }
        self.decorators
            .iter()
            .rev()
            .map(Decorator::name)
            .collect::<Vec<_>>()
            .join("_")
    }

    pub fn validate(&self) -> Result<()> {
        self.decorators.iter().try_for_each(Decorator::validate)
    }

    pub fn has_mldg(&self) -> bool {
        self.decorators.iter().any(|d| matches!(d, Decorator::Mldg(_)))
    }

    pub fn has_fishr(&self) -> bool {
        self.decorators.iter().any(|d| matches!(d, Decorator::Fishr(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub report: LossReport,
    pub grad_norm: f64,
}

/// Runs a decoration chain step by step. Holds the step counter and the
/// moving averages of any Fishr decorators.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainerConfig,
    step: u64,
    fishr: Vec<FishrState>,
}

impl Trainer {
    pub fn new(config: TrainerConfig) -> Result<Trainer> {
        config.validate()?;
        let fishr = vec![FishrState::default(); config.decorators.len()];
        Ok(Trainer { config, step: 0, fishr })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Fills the gradient buffers with the gradient of the full-chain loss
    /// and returns its decomposition, without updating parameters.
    pub fn accumulate(&mut self, model: &mut Model, batches: &[Batch]) -> Result<LossReport> {
        if batches.is_empty() {
            return Err(Error::Shape("training step without batches".into()));
        }
        model.params_mut().zero_grad();
        let holdout = if self.config.has_mldg() {
            if batches.len() < 2 {
                return Err(Error::InvalidConfig("mldg requires ≥2 training domains".into()));
            }
            Some(holdout_index(self.step, batches.len()))
        } else {
            None
        };
        let sources: Vec<&Batch> = batches
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != holdout)
            .map(|(_, b)| b)
            .collect();
        // the meta split only feeds the mldg term; everything else sees all domains
        let w = 1.0 / batches.len() as f64;
        let mut parts = Vec::with_capacity(batches.len());
        for b in batches {
            parts.push(model.compute(b, w)?);
        }
        let mut report = LossReport::mean(&parts)?;

        for (k, dec) in self.config.decorators.iter().enumerate() {
            let mu = dec.gamma_reg();
            let value = match dec {
                Decorator::Dial(cfg) => {
                    let mut sum = 0.0;
                    for b in batches {
                        sum += dial_value(model, b, cfg, Some(mu * w))?;
                    }
                    sum * w
                }
                Decorator::Mldg(cfg) => {
                    let target = &batches[holdout.expect("mldg holdout")];
                    mldg_value(model, &sources, target, cfg, Some(mu))?
                }
                Decorator::Fishr(cfg) => {
                    // variance needs two samples; short tail batches sit out
                    let usable: Vec<&Batch> = batches.iter().filter(|b| b.len() >= 2).collect();
                    if usable.len() < 2 {
                        0.0
                    } else {
                        fishr_value(model, &usable, cfg, &mut self.fishr[k], Some(mu))?
                    }
                }
            };
            report.push(dec.name(), value, mu);
        }
        Ok(report)
    }

    /// One training step: accumulate, check finiteness, one optimizer update.
    pub fn step(&mut self, model: &mut Model, batches: &[Batch], optimizer: &mut Optimizer) -> Result<StepReport> {
        let report = self.accumulate(model, batches)?;
        if !report.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step });
        }
        let grad_norm = model.params().grad_norm();
        optimizer.step(model.params_mut())?;
        let out = StepReport {
            step: self.step,
            report,
            grad_norm,
        };
        self.step += 1;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the step reports over the epoch.
    pub train: LossReport,
    pub val_accuracy: f64,
}

/// Called after every epoch; returning `true` stops training.
pub trait Observer {
    fn after_epoch(&mut self, record: &EpochRecord, model: &Model) -> Result<bool>;
}

/// Observer that never stops training.
pub struct NoObserver;

impl Observer for NoObserver {
    fn after_epoch(&mut self, _: &EpochRecord, _: &Model) -> Result<bool> {
        Ok(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Epoch `e` shuffles with `shuffle_seed + e`.
    pub shuffle_seed: u64,
}

/// Pooled accuracy over all samples of the views.
pub fn views_accuracy(model: &Model, views: &[DomainView<'_>]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for v in views {
        if v.indices.is_empty() {
            continue;
        }
        let b = v.full_batch();
        let pred = model.predict(&b.features)?;
        hits += pred.iter().zip(&b.labels).filter(|(p, y)| p == y).count();
        total += b.len();
    }
    if total == 0 {
        return Err(Error::Shape("no samples to evaluate".into()));
    }
    Ok(hits as f64 / total as f64)
}

pub fn train(
    model: &mut Model,
    trainer: &mut Trainer,
    optimizer: &mut Optimizer,
    task: &Task,
    split: &SplitIndices,
    opts: &TrainOptions,
    observer: &mut dyn Observer,
) -> Result<Vec<EpochRecord>> {
    if opts.batch_size == 0 {
        return Err(Error::key("bs", "must be >= 1"));
    }
    let train_views = split.train_views(task);
    let val_views = split.val_views(task);
    let mut history = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        let steps = domain_steps(
            &train_views,
            opts.batch_size,
            opts.shuffle_seed.wrapping_add(epoch as u64),
        );
        let mut reports = Vec::with_capacity(steps.len());
        for batches in &steps {
            reports.push(trainer.step(model, batches, optimizer)?.report);
        }
        let record = EpochRecord {
            epoch,
            train: LossReport::mean(&reports)?,
            val_accuracy: views_accuracy(model, &val_views)?,
        };
        log::debug!(
            "epoch {epoch}: loss {:.6} val acc {:.4}",
            record.train.total,
            record.val_accuracy
        );
        let stop = observer.after_epoch(&record, model)?;
        history.push(record);
        if stop {
            break;
        }
    }
    Ok(history)
}
