//! Name resolution through a chain of handlers. Exact kinds are tried
//! first; the last handler splits on `_` and resolves each part through
//! the same chain, then combines them (composition for models,
//! decoration for trainers).

use super::ExperimentConfig;
use crate::models::{compose_configs, MemberConfig, ModelConfig};
use crate::trainers::{Decorator, DialConfig, FishrConfig, MldgConfig, TrainerConfig};
use crate::{Error, Result};

/// One link of the chain: builds the component or passes (`None`).
pub trait Handler<T> {
    fn handle(&self, name: &str, cfg: &ExperimentConfig, chain: &Registry<T>) -> Option<Result<T>>;
    /// Names this handler constructs directly, for error messages.
    fn known(&self) -> Vec<&'static str> {
        Vec::new()
    }
}

pub struct Registry<T> {
    what: &'static str,
    handlers: Vec<Box<dyn Handler<T> + Send + Sync>>,
}

impl<T> Registry<T> {
    pub fn new(what: &'static str) -> Self {
        Self {
            what,
            handlers: Vec::new(),
        }
    }

    pub fn with(mut self, h: impl Handler<T> + Send + Sync + 'static) -> Self {
        self.handlers.push(Box::new(h));
        self
    }

    pub fn known(&self) -> Vec<&'static str> {
        self.handlers.iter().flat_map(|h| h.known()).collect()
    }

    pub fn resolve(&self, name: &str, cfg: &ExperimentConfig) -> Result<T> {
        for h in &self.handlers {
            if let Some(r) = h.handle(name, cfg, self) {
                return r;
            }
        }
        Err(Error::Resolve(format!(
            "unknown {}: {}; known: {}",
            self.what,
            name,
            self.known().join(", ")
        )))
    }
}

struct Exact<T> {
    name: &'static str,
    build: fn(&ExperimentConfig) -> Result<T>,
}

impl<T> Handler<T> for Exact<T> {
    fn handle(&self, name: &str, cfg: &ExperimentConfig, _: &Registry<T>) -> Option<Result<T>> {
        (name == self.name).then(|| (self.build)(cfg))
    }

    fn known(&self) -> Vec<&'static str> {
        vec![self.name]
    }
}

/// Splits `a_b_c` and folds the resolved parts left to right.
struct Splitter<T> {
    combine: fn(Vec<T>) -> Result<T>,
}

impl<T> Handler<T> for Splitter<T> {
    fn handle(&self, name: &str, cfg: &ExperimentConfig, chain: &Registry<T>) -> Option<Result<T>> {
        if !name.contains('_') {
            return None;
        }
        let parts: Result<Vec<T>> = name.split('_').map(|p| chain.resolve(p, cfg)).collect();
        Some(parts.and_then(self.combine))
    }
}

fn require(v: Option<f64>, key: &str, model: &str) -> Result<f64> {
    v.ok_or_else(|| Error::key(key, format!("required by model {model}")))
}

pub fn model_registry() -> Registry<ModelConfig> {
    Registry::new("model")
        .with(Exact {
            name: "erm",
            build: |cfg| Ok(ModelConfig::single(MemberConfig::Erm, cfg.net_config())),
        })
        .with(Exact {
            name: "dann",
            build: |cfg| {
                let m = MemberConfig::Dann {
                    gamma_reg: cfg.gamma_reg_dann.unwrap_or(cfg.gamma_reg),
                };
                Ok(ModelConfig::single(m, cfg.net_config()))
            },
        })
        .with(Exact {
            name: "diva",
            build: |cfg| {
                let m = MemberConfig::DivaLite {
                    gamma_y: require(cfg.gamma_y, "gamma_y", "diva")?,
                    gamma_d: require(cfg.gamma_d, "gamma_d", "diva")?,
                    zx_dim: cfg.zx_dim,
                    zy_dim: cfg.zy_dim,
                    zd_dim: cfg.zd_dim,
                };
                Ok(ModelConfig::single(m, cfg.net_config()))
            },
        })
        .with(Splitter {
            combine: compose_configs,
        })
}

fn basic_only_alone(_: &ExperimentConfig) -> Result<TrainerConfig> {
    Ok(TrainerConfig::basic())
}

pub fn trainer_registry() -> Registry<TrainerConfig> {
    Registry::new("trainer")
        .with(Exact {
            name: "basic",
            build: basic_only_alone,
        })
        .with(Exact {
            name: "dial",
            build: |cfg| {
                let d = Decorator::Dial(DialConfig {
                    gamma_reg: cfg.gamma_reg_dial.unwrap_or(cfg.gamma_reg),
                    n_steps: cfg.dial_steps,
                    step_size: cfg.dial_step_size.unwrap_or(cfg.dial_epsilon / 3.0),
                    epsilon: cfg.dial_epsilon,
                });
                Ok(TrainerConfig::decorate(d, TrainerConfig::basic()))
            },
        })
        .with(Exact {
            name: "mldg",
            build: |cfg| {
                let d = Decorator::Mldg(MldgConfig {
                    gamma_reg: cfg.gamma_reg_mldg.unwrap_or(cfg.gamma_reg),
                    inner_lr: cfg.mldg_inner_lr,
                });
                Ok(TrainerConfig::decorate(d, TrainerConfig::basic()))
            },
        })
        .with(Exact {
            name: "fishr",
            build: |cfg| {
                let d = Decorator::Fishr(FishrConfig {
                    gamma_reg: cfg.gamma_reg_fishr.unwrap_or(cfg.gamma_reg),
                    ema_decay: cfg.fishr_ema,
                    ..Default::default()
                });
                Ok(TrainerConfig::decorate(d, TrainerConfig::basic()))
            },
        })
        .with(Splitter {
            combine: decorate_chain,
        })
}

/// `[outer, …, inner]` in written order.
fn decorate_chain(parts: Vec<TrainerConfig>) -> Result<TrainerConfig> {
    if parts.iter().any(|p| p.decorators.is_empty()) {
        return Err(Error::Resolve("trainer `basic` may only appear alone".into()));
    }
    let mut out = TrainerConfig::basic();
    for p in parts.into_iter().rev() {
        for d in p.decorators {
            out = TrainerConfig::decorate(d, out);
        }
    }
    Ok(out)
}
