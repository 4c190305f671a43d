//! Domain-generalization scenarios: per-domain labeled datasets plus the
//! partition into training and held-out test domains.

mod batching;
mod builtin;
mod io;

use std::sync::atomic::{AtomicUsize, Ordering};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::netcore::Tensor;
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

pub use batching::{domain_steps, minibatches, Batch, DomainView};
pub use builtin::{builtin_task, BuiltinTask, RotatedMoonsParams, SpuriousBlobsParams};
pub use io::{parse_vec_file, task_from_folder, task_from_pathfile};

pub const DEFAULT_VAL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub name: String,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl DomainDataset {
    pub fn new(name: impl Into<String>, features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let name = name.into();
        if features.shape().len() != 2 {
            return Err(Error::Task(format!("domain {name}: features must be a matrix")));
        }
        if features.rows() == 0 {
            return Err(Error::Task(format!("domain {name} is empty")));
        }
        if features.rows() != labels.len() {
            return Err(Error::Task(format!(
                "domain {name}: {} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Task(format!(
                "domain {name}: label {bad} outside [0, {num_classes})"
            )));
        }
        if !features.is_finite() {
            return Err(Error::Task(format!("domain {name}: non-finite feature value")));
        }
        Ok(Self {
            name,
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// A set of domains with a designated list of test domains.
///
/// Test-domain data is only reachable through [`Task::test_data`], which
/// counts every read so tests can assert that nothing touched it early.
#[derive(Debug)]
pub struct Task {
    name: String,
    domains: IndexMap<String, DomainDataset>,
    test_domains: Vec<String>,
    num_classes: usize,
    val_fraction: f64,
    test_reads: AtomicUsize,
}

impl Clone for Task {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            domains: self.domains.clone(),
            test_domains: self.test_domains.clone(),
            num_classes: self.num_classes,
            val_fraction: self.val_fraction,
            test_reads: AtomicUsize::new(0),
        }
    }
}

impl Task {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.domains[0].dim()
    }

    pub fn val_fraction(&self) -> f64 {
        self.val_fraction
    }

    pub fn domain_names(&self) -> impl Iterator<Item = &str> {
        self.domains.keys().map(String::as_str)
    }

    pub fn test_domains(&self) -> &[String] {
        &self.test_domains
    }

    pub fn is_test_domain(&self, name: &str) -> bool {
        self.test_domains.iter().any(|t| t == name)
    }

    pub fn training_domain_names(&self) -> Vec<&str> {
        self.domain_names().filter(|d| !self.is_test_domain(d)).collect()
    }

    pub fn num_training_domains(&self) -> usize {
        self.domains.len() - self.test_domains.len()
    }

    /// Training domains in task order; index in this list is the domain id.
    pub fn training_domains(&self) -> Vec<&DomainDataset> {
        self.domains
            .values()
            .filter(|d| !self.is_test_domain(&d.name))
            .collect()
    }

    pub fn train_domain(&self, name: &str) -> Result<&DomainDataset> {
        if self.is_test_domain(name) {
            return Err(Error::Task(format!("{name} is a test domain")));
        }
        self.domains
            .get(name)
            .ok_or_else(|| Error::Task(format!("unknown domain {name}")))
    }

    /// Full data of a test domain. Every call is counted.
    pub fn test_data(&self, name: &str) -> Result<&DomainDataset> {
        if !self.is_test_domain(name) {
            return Err(Error::Task(format!("{name} is not a test domain")));
        }
        self.test_reads.fetch_add(1, Ordering::SeqCst);
        Ok(&self.domains[name])
    }

    pub fn test_reads(&self) -> usize {
        self.test_reads.load(Ordering::SeqCst)
    }

    /// Same data with a different test-domain selection.
    pub fn with_test_domains(&self, test_domains: &[String]) -> Result<Task> {
        let datasets = self.domains.values().cloned().collect();
        task_from_datasets(&self.name, datasets, test_domains, self.val_fraction)
    }

    pub fn with_val_fraction(mut self, val_fraction: f64) -> Result<Task> {
        check_val_fraction(val_fraction)?;
        self.val_fraction = val_fraction;
        Ok(self)
    }
}

fn check_val_fraction(v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::key("val_fraction", format!("must lie in (0, 1), got {v}")));
    }
    Ok(())
}

/// Builds a task from in-memory per-domain datasets (kept in the given order).
pub fn task_from_datasets(
    name: &str,
    datasets: Vec<DomainDataset>,
    test_domains: &[String],
    val_fraction: f64,
) -> Result<Task> {
    check_val_fraction(val_fraction)?;
    let first = datasets
        .first()
        .ok_or_else(|| Error::Task("task has no domains".into()))?;
    let (dim, classes, first_name) = (first.dim(), first.num_classes, first.name.clone());
    let mut domains = IndexMap::new();
    for d in datasets {
        if d.dim() != dim {
            return Err(Error::Task(format!(
                "feature dimension mismatch: domain {first_name} has {dim}, domain {} has {}",
                d.name,
                d.dim()
            )));
        }
        if d.num_classes != classes {
            return Err(Error::Task(format!(
                "class count mismatch: domain {first_name} has {classes}, domain {} has {}",
                d.name, d.num_classes
            )));
        }
        if domains.contains_key(&d.name) {
            return Err(Error::Task(format!("duplicate domain {}", d.name)));
        }
        domains.insert(d.name.clone(), d);
    }
    if test_domains.is_empty() {
        return Err(Error::key("te_d", "at least one test domain is required"));
    }
    for t in test_domains {
        if !domains.contains_key(t) {
            let known: Vec<&str> = domains.keys().map(String::as_str).collect();
            return Err(Error::key(
                "te_d",
                format!("unknown test domain {t}; domains: {}", known.join(", ")),
            ));
        }
    }
    let mut unique: Vec<String> = Vec::new();
    for t in test_domains {
        if !unique.contains(t) {
            unique.push(t.clone());
        }
    }
    if domains.keys().all(|d| unique.contains(d)) {
        return Err(Error::key("te_d", "no training domain remains"));
    }
    Ok(Task {
        name: name.to_string(),
        domains,
        test_domains: unique,
        num_classes: classes,
        val_fraction,
        test_reads: AtomicUsize::new(0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Per-training-domain train/validation index lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub seed: u64,
    pub domains: IndexMap<String, DomainSplit>,
}

impl SplitIndices {
    pub fn train_views<'a>(&self, task: &'a Task) -> Vec<DomainView<'a>> {
        self.views(task, |s| &s.train)
    }

    pub fn val_views<'a>(&self, task: &'a Task) -> Vec<DomainView<'a>> {
        self.views(task, |s| &s.val)
    }

    fn views<'a>(&self, task: &'a Task, pick: impl Fn(&DomainSplit) -> &Vec<usize>) -> Vec<DomainView<'a>> {
        task.training_domains()
            .into_iter()
            .enumerate()
            .map(|(id, data)| DomainView {
                domain: id,
                data,
                indices: pick(&self.domains[&data.name]).clone(),
            })
            .collect()
    }
}

/// Shuffles each training domain and holds out `round(val_fraction·n)`
/// samples (at least one, at most `n − 1`) for validation.
pub fn split_train_val(task: &Task, seed: u64) -> Result<SplitIndices> {
    let mut domains = IndexMap::new();
    for (k, d) in task.training_domains().into_iter().enumerate() {
        let n = d.len();
        if n < 2 {
            return Err(Error::Task(format!(
                "domain {} has {n} sample(s); at least 2 are needed for a train/validation split",
                d.name
            )));
        }
        let n_val = ((task.val_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut seeded(derive_seed(seed, k as u64)));
        let val = idx[..n_val].to_vec();
        let train = idx[n_val..].to_vec();
        domains.insert(d.name.clone(), DomainSplit { train, val });
    }
    Ok(SplitIndices { seed, domains })
}
