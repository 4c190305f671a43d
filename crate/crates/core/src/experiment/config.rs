use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize};

use crate::models::NetConfig;
use crate::netcore::{Activation, OptimizerKind};
use crate::tasks::{BuiltinTask, DEFAULT_VAL_FRACTION};
use crate::{Error, Result};

/// Where the task comes from: a built-in name or a built-in with parameters.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "serde_yaml::Value")]
pub enum TaskSpec {
    Named(String),
    Builtin(BuiltinTask),
}

impl Serialize for TaskSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TaskSpec::Named(n) => s.serialize_str(n),
            TaskSpec::Builtin(b) => b.serialize(s),
        }
    }
}

impl TryFrom<serde_yaml::Value> for TaskSpec {
    type Error = String;

    fn try_from(v: serde_yaml::Value) -> std::result::Result<Self, String> {
        match v {
            serde_yaml::Value::String(s) => Ok(TaskSpec::Named(s)),
            other => serde_yaml::from_value(other)
                .map(TaskSpec::Builtin)
                .map_err(|e| format!("task: {e}")),
        }
    }
}

impl TaskSpec {
    pub fn builtin(&self) -> Result<BuiltinTask> {
        match self {
            TaskSpec::Named(n) => BuiltinTask::from_name(n).ok_or_else(|| {
                Error::key(
                    "task",
                    format!("unknown builtin task `{n}`; known: spurious_blobs, rotated_moons"),
                )
            }),
            TaskSpec::Builtin(b) => Ok(b.clone()),
        }
    }
}

/// Contents of a task descriptor file (`tpath`). Relative paths are
/// resolved against the descriptor's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSource {
    Builtin {
        builtin: BuiltinTask,
    },
    Folder {
        root: PathBuf,
    },
    Pathfile {
        base_dir: PathBuf,
        num_classes: usize,
        /// Domain name → index file.
        domains: IndexMap<String, PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Sgd,
    Adam,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

/// A single-run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in task; mutually exclusive with `tpath`.
    pub task: Option<TaskSpec>,
    /// Task descriptor file.
    pub tpath: Option<PathBuf>,
    /// Test domains; empty keeps the built-in task's own split.
    #[serde(deserialize_with = "one_or_many")]
    pub te_d: Vec<String>,
    pub bs: usize,
    pub model: String,
    pub epos: usize,
    pub trainer: String,
    pub gamma_y: Option<f64>,
    pub gamma_d: Option<f64>,
    /// Default multiplier for every regularizing model or trainer kind.
    pub gamma_reg: f64,
    pub gamma_reg_dann: Option<f64>,
    pub gamma_reg_dial: Option<f64>,
    pub gamma_reg_mldg: Option<f64>,
    pub gamma_reg_fishr: Option<f64>,
    pub zx_dim: usize,
    pub zy_dim: usize,
    pub zd_dim: usize,
    /// Hidden widths of the feature extractor.
    #[serde(alias = "npath")]
    pub net_widths: Vec<usize>,
    /// Hidden widths of domain classifier heads.
    #[serde(alias = "npath_dom")]
    pub net_widths_dom: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
    pub lr: f64,
    pub optimizer: OptimizerName,
    pub momentum: f64,
    /// Early-stop patience in epochs; absent means train all epochs.
    pub patience: Option<usize>,
    pub seed: u64,
    /// Seed of built-in task data, kept apart from `seed` so that runs
    /// with different seeds see the same dataset.
    pub task_seed: u64,
    pub val_fraction: f64,
    pub dial_steps: usize,
    pub dial_epsilon: f64,
    pub dial_step_size: Option<f64>,
    pub mldg_inner_lr: f64,
    pub fishr_ema: f64,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: None,
            tpath: None,
            te_d: Vec::new(),
            bs: 32,
            model: "erm".into(),
            epos: 20,
            trainer: "basic".into(),
            gamma_y: None,
            gamma_d: None,
            gamma_reg: 0.1,
            gamma_reg_dann: None,
            gamma_reg_dial: None,
            gamma_reg_mldg: None,
            gamma_reg_fishr: None,
            zx_dim: 2,
            zy_dim: 4,
            zd_dim: 2,
            net_widths: vec![16],
            net_widths_dom: vec![16],
            feature_dim: 8,
            activation: Activation::Relu,
            lr: 0.002,
            optimizer: OptimizerName::Adam,
            momentum: 0.0,
            patience: None,
            seed: 0,
            task_seed: 0,
            val_fraction: DEFAULT_VAL_FRACTION,
            dial_steps: 3,
            dial_epsilon: 0.3,
            dial_step_size: None,
            mldg_inner_lr: 0.01,
            fishr_ema: 0.9,
            base_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_yaml_str(s: &str) -> Result<Self> {
        serde_yaml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self =
            serde_yaml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_yaml(&self) -> Result<String> {
        serde_yaml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Checks the fields that do not depend on the task or on resolution.
    pub fn validate(&self) -> Result<()> {
        if self.task.is_some() == self.tpath.is_some() {
            return Err(Error::key("task", "exactly one of `task` and `tpath` must be set"));
        }
        if self.bs == 0 {
            return Err(Error::key("bs", "must be >= 1"));
        }
        if self.epos == 0 {
            return Err(Error::key("epos", "must be >= 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::key("lr", "must be finite and >= 0"));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::key("momentum", "must be in [0, 1)"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::key("val_fraction", "must be in (0, 1)"));
        }
        if self.feature_dim == 0 {
            return Err(Error::key("feature_dim", "must be >= 1"));
        }
        if self.net_widths.contains(&0) {
            return Err(Error::key("net_widths", "widths must be >= 1"));
        }
        if self.net_widths_dom.contains(&0) {
            return Err(Error::key("net_widths_dom", "widths must be >= 1"));
        }
        Ok(())
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            feature_widths: self.net_widths.clone(),
            feature_dim: self.feature_dim,
            domain_widths: self.net_widths_dom.clone(),
            activation: self.activation,
            init_scale: 1.0,
        }
    }

    pub fn optimizer_kind(&self) -> OptimizerKind {
        match self.optimizer {
            OptimizerName::Sgd => OptimizerKind::Sgd {
                momentum: self.momentum,
            },
            OptimizerName::Adam => OptimizerKind::adam(),
        }
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }
}
