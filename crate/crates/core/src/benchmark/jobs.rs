use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::config::{BenchmarkConfig, ParamMap, SamplingMode};
use super::sampling::{grid_params, sample_params};
use crate::experiment::ExperimentConfig;
use crate::rng::{derive_seed, name_tag};
use crate::{Error, Result};

const SHARED_TAG: &str = "\u{0}shared";

/// One cell of the job matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    /// Position in enumeration order.
    pub job_index: usize,
    pub method: String,
    pub params: ParamMap,
    pub param_index: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub test_domain: String,
    pub config: ExperimentConfig,
}

impl JobSpec {
    pub fn job_id(&self) -> String {
        format!(
            "{}-p{:03}-s{:03}-{}",
            self.method, self.param_index, self.seed_index, self.test_domain
        )
    }
}

/// Samples the shared pool once; index `i` of every method that
/// references shared names reads `pool[i]`.
pub fn shared_pool(cfg: &BenchmarkConfig) -> Result<Vec<ParamMap>> {
    sample_params(
        &cfg.shared.params,
        cfg.pool_size(),
        derive_seed(cfg.sampling.base_seed, name_tag(SHARED_TAG)),
    )
}

/// The parameter maps of one method, shared names first.
///
/// Random mode binds shared names from the pool and draws private
/// distributions from a stream seeded per method name. Grid mode
/// enumerates the product over shared and private axes.
pub fn method_samples(cfg: &BenchmarkConfig, method: &str, pool: &[ParamMap]) -> Result<Vec<ParamMap>> {
    let spec = cfg
        .methods
        .get(method)
        .ok_or_else(|| Error::key("methods", format!("unknown method `{method}`")))?;
    if cfg.sampling.mode == SamplingMode::Grid {
        return grid_params(&cfg.method_distributions(method)?);
    }
    let n = cfg.sampling.n_param_samples;
    if !spec.shared.is_empty() && n > pool.len() {
        return Err(Error::key(
            "sampling.n_param_samples",
            format!("{n} exceeds shared.pool_size {}", pool.len()),
        ));
    }
    let private = sample_params(&spec.params, n, derive_seed(cfg.sampling.base_seed, name_tag(method)))?;
    Ok(private
        .into_iter()
        .enumerate()
        .map(|(i, own)| {
            let mut m = ParamMap::new();
            for name in &spec.shared {
                m.insert(name.clone(), pool[i][name].clone());
            }
            m.extend(own);
            m
        })
        .collect())
}

/// Every job, ordered method-major, then parameter sample, then seed,
/// then test domain. Seeds are `base_seed + seed_index`.
pub fn enumerate_jobs(cfg: &BenchmarkConfig) -> Result<Vec<JobSpec>> {
    let pool = shared_pool(cfg)?;
    let domains = cfg.test_domains()?;
    let mut jobs = Vec::new();
    for method in cfg.methods.keys() {
        let samples = method_samples(cfg, method, &pool)?;
        for (param_index, params) in samples.iter().enumerate() {
            for seed_index in 0..cfg.sampling.n_seeds {
                let seed = cfg.sampling.base_seed.wrapping_add(seed_index as u64);
                for domain in &domains {
                    jobs.push(JobSpec {
                        job_index: jobs.len(),
                        method: method.clone(),
                        params: params.clone(),
                        param_index,
                        seed_index,
                        seed,
                        test_domain: domain.clone(),
                        config: cfg.job_config(method, params, seed, domain)?,
                    });
                }
            }
        }
    }
    Ok(jobs)
}

pub const MANIFEST: &str = "jobs.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub jobs: Vec<JobSpec>,
}

pub fn write_manifest(out_dir: &Path, jobs: &[JobSpec]) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let text =
        serde_json::to_string_pretty(&Manifest { jobs: jobs.to_vec() }).map_err(|e| Error::Format(e.to_string()))?;
    super::write_atomic(&out_dir.join(MANIFEST), text.as_bytes())
}

pub fn read_manifest(out_dir: &Path) -> Result<Vec<JobSpec>> {
    let path = out_dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    Ok(m.jobs)
}

/// Parameter names across all jobs, in first-appearance order.
pub fn param_columns(jobs: &[JobSpec]) -> Vec<String> {
    let mut cols: IndexMap<String, ()> = IndexMap::new();
    for j in jobs {
        for k in j.params.keys() {
            cols.insert(k.clone(), ());
        }
    }
    cols.into_keys().collect()
}
