//! Assembling and running single experiments: task loading, name
//! resolution, training with model selection, test-domain evaluation.
//!
//! Seeds derive from `seed`: the train/validation split uses `seed`,
//! network initialization `seed + 1`, and the batch shuffle of epoch `e`
//! `seed + 2 + e`. Built-in task data uses `task_seed`.

mod config;
mod load;
mod observer;
mod resolve;

pub use config::{ExperimentConfig, OptimizerName, TaskSource, TaskSpec};
pub use load::{load_config, parse_set, Provenance, Source};
pub use observer::BestValObserver;
pub use resolve::{model_registry, trainer_registry, Handler, Registry};

use std::path::Path;
use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::models::{Model, ModelConfig, TaskDims};
use crate::netcore::Optimizer;
use crate::tasks::{builtin_task, split_train_val, task_from_folder, task_from_pathfile, SplitIndices, Task};
use crate::trainers::{train, EpochRecord, TrainOptions, Trainer, TrainerConfig};
use crate::{Error, Result};

/// Loads the task named by `task` or described by the `tpath` file.
pub fn load_task(cfg: &ExperimentConfig) -> Result<Task> {
    let task = match (&cfg.task, &cfg.tpath) {
        (Some(spec), None) => builtin_task(&spec.builtin()?, cfg.task_seed)?,
        (None, Some(tpath)) => {
            let path = cfg.resolve_path(tpath);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let source: TaskSource =
                serde_yaml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
            let dir = path.parent().unwrap_or(Path::new("."));
            let rel = |p: &Path| if p.is_relative() { dir.join(p) } else { p.to_path_buf() };
            let needs_te_d = || {
                if cfg.te_d.is_empty() {
                    Err(Error::key("te_d", "required for folder and pathfile tasks"))
                } else {
                    Ok(())
                }
            };
            match source {
                TaskSource::Builtin { builtin } => builtin_task(&builtin, cfg.task_seed)?,
                TaskSource::Folder { root } => {
                    needs_te_d()?;
                    task_from_folder(&rel(&root), &cfg.te_d, cfg.val_fraction)?
                }
                TaskSource::Pathfile {
                    base_dir,
                    num_classes,
                    domains,
                } => {
                    needs_te_d()?;
                    let index: Vec<(String, std::path::PathBuf)> =
                        domains.into_iter().map(|(d, p)| (d, rel(&p))).collect();
                    task_from_pathfile(&index, &rel(&base_dir), num_classes, &cfg.te_d, cfg.val_fraction)?
                }
            }
        }
        _ => return Err(Error::key("task", "exactly one of `task` and `tpath` must be set")),
    };
    let task = if cfg.te_d.is_empty() || task.test_domains() == cfg.te_d.as_slice() {
        task
    } else {
        task.with_test_domains(&cfg.te_d)?
    };
    if task.val_fraction() != cfg.val_fraction {
        task.with_val_fraction(cfg.val_fraction)
    } else {
        Ok(task)
    }
}

pub fn resolve_model(cfg: &ExperimentConfig) -> Result<ModelConfig> {
    model_registry().resolve(&cfg.model, cfg)
}

pub fn resolve_trainer(cfg: &ExperimentConfig) -> Result<TrainerConfig> {
    trainer_registry().resolve(&cfg.trainer, cfg)
}

/// Checks everything that can be checked without loading data.
pub fn validate_config(cfg: &ExperimentConfig) -> Result<(ModelConfig, TrainerConfig)> {
    cfg.validate()?;
    let model = resolve_model(cfg)?;
    let trainer = resolve_trainer(cfg)?;
    model.feature_dim()?;
    trainer.validate()?;
    if trainer.has_fishr() && cfg.bs < 2 {
        return Err(Error::key("bs", "fishr needs batches of >= 2 samples"));
    }
    Ok((model, trainer))
}

/// A built experiment, ready to run.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub task: Task,
    pub split: SplitIndices,
    pub model: Model,
    pub trainer: Trainer,
    pub optimizer: Optimizer,
    pub observer: BestValObserver,
}

pub fn build_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let (model_cfg, trainer_cfg) = validate_config(cfg)?;
    let task = load_task(cfg)?;
    let n_train = task.num_training_domains();
    for (needs_two, name) in [(trainer_cfg.has_mldg(), "mldg"), (trainer_cfg.has_fishr(), "fishr")] {
        if needs_two && n_train < 2 {
            return Err(Error::InvalidConfig(format!("{name} requires ≥2 training domains")));
        }
    }
    let split = split_train_val(&task, cfg.seed)?;
    let dims = TaskDims {
        input_dim: task.feature_dim(),
        num_classes: task.num_classes(),
        num_domains: n_train,
    };
    let model = Model::build(&model_cfg, dims, cfg.seed.wrapping_add(1))?;
    let trainer = Trainer::new(trainer_cfg)?;
    let optimizer = Optimizer::new(cfg.optimizer_kind(), cfg.lr)?;
    Ok(Experiment {
        config: cfg.clone(),
        task,
        split,
        model,
        trainer,
        optimizer,
        observer: BestValObserver::new(cfg.patience),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub model: String,
    pub trainer: String,
    pub selected_epoch: usize,
    pub val_accuracy: f64,
    /// Accuracy on each test domain, in test-domain order.
    pub test_accuracy: IndexMap<String, f64>,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
    /// Not serialized, so result files are reproducible byte for byte.
    #[serde(default, skip_serializing)]
    pub wall_time_s: f64,
}

impl RunResult {
    /// Mean accuracy over test domains.
    pub fn mean_test_accuracy(&self) -> f64 {
        let n = self.test_accuracy.len().max(1) as f64;
        self.test_accuracy.values().sum::<f64>() / n
    }
}

impl Experiment {
    /// Trains with the observer attached and returns the epoch history.
    pub fn train(&mut self) -> Result<Vec<EpochRecord>> {
        let opts = TrainOptions {
            epochs: self.config.epos,
            batch_size: self.config.bs,
            shuffle_seed: self.config.seed.wrapping_add(2),
        };
        train(
            &mut self.model,
            &mut self.trainer,
            &mut self.optimizer,
            &self.task,
            &self.split,
            &opts,
            &mut self.observer,
        )
    }

    /// Restores the best-validation snapshot and evaluates every test
    /// domain. This is the only place test-domain data is read.
    pub fn select_and_evaluate(&mut self, history: Vec<EpochRecord>, wall_time_s: f64) -> Result<RunResult> {
        let snapshot = self
            .observer
            .snapshot()
            .ok_or_else(|| Error::InvalidConfig("no epoch was observed".into()))?;
        self.model.params_mut().copy_values_from(snapshot)?;
        let mut test_accuracy = IndexMap::new();
        for name in self.task.test_domains().to_vec() {
            let data = self.task.test_data(&name)?;
            test_accuracy.insert(name, self.model.accuracy(&data.features, &data.labels)?);
        }
        Ok(RunResult {
            config: self.config.clone(),
            model: self.model.config().name(),
            trainer: self.trainer.config().name(),
            selected_epoch: self.observer.best_epoch().unwrap_or(0),
            val_accuracy: self.observer.best_accuracy().unwrap_or(0.0),
            test_accuracy,
            epochs_run: history.len(),
            history,
            wall_time_s,
        })
    }

    pub fn run(mut self) -> Result<RunResult> {
        let start = Instant::now();
        let history = self.train()?;
        let elapsed = start.elapsed().as_secs_f64();
        self.select_and_evaluate(history, elapsed)
    }
}

/// Builds and runs one experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    build_experiment(cfg)?.run()
}
