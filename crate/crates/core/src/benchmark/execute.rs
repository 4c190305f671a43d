use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::jobs::JobSpec;
use super::write_atomic;
use crate::experiment::{run_experiment, RunResult};
use crate::{Error, Result};

pub const RESULTS_DIR: &str = "results";

/// Contents of a per-job result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum JobOutcome {
    Ok(Box<RunResult>),
    Failed { error: String },
}

impl JobOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, JobOutcome::Ok(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_time_s: f64,
}

pub fn result_path(out_dir: &Path, job_id: &str) -> PathBuf {
    out_dir.join(RESULTS_DIR).join(format!("{job_id}.json"))
}

pub fn timing_path(out_dir: &Path, job_id: &str) -> PathBuf {
    out_dir.join(RESULTS_DIR).join(format!("{job_id}.timing.json"))
}

pub fn read_outcome(path: &Path) -> Result<JobOutcome> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn read_timing(path: &Path) -> Option<Timing> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Writes a result file and its timing sidecar. The result file carries no
/// wall-clock data, so reruns produce byte-identical files.
pub fn write_outcome(result: &Path, timing: &Path, outcome: &JobOutcome, wall_time_s: f64) -> Result<()> {
    let text = serde_json::to_string_pretty(outcome).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(result, text.as_bytes())?;
    let t = serde_json::to_string(&Timing { wall_time_s }).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(timing, t.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobReport {
    pub job_id: String,
    /// `Skipped` means an ok result already existed.
    pub status: JobStatus,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionSummary {
    /// In job enumeration order.
    pub jobs: Vec<JobReport>,
}

impl ExecutionSummary {
    fn count(&self, s: JobStatus) -> usize {
        self.jobs.iter().filter(|j| j.status == s).count()
    }

    pub fn ran_ok(&self) -> usize {
        self.count(JobStatus::Ok)
    }

    pub fn failed(&self) -> usize {
        self.count(JobStatus::Failed)
    }

    pub fn skipped(&self) -> usize {
        self.count(JobStatus::Skipped)
    }

    /// 0 when every job has an ok result, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failed() == 0 {
            0
        } else {
            3
        }
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "job panicked".into()
    }
}

fn run_job(job: &JobSpec, out_dir: &Path, force: bool) -> Result<JobReport> {
    let id = job.job_id();
    let result = result_path(out_dir, &id);
    if !force && read_outcome(&result).is_ok_and(|o| o.is_ok()) {
        log::info!("{id}: skipped (result exists)");
        return Ok(JobReport {
            job_id: id,
            status: JobStatus::Skipped,
            error: None,
        });
    }
    let start = Instant::now();
    let outcome = match catch_unwind(AssertUnwindSafe(|| run_experiment(&job.config))) {
        Ok(Ok(r)) => JobOutcome::Ok(Box::new(r)),
        Ok(Err(e)) => JobOutcome::Failed { error: e.to_string() },
        Err(p) => JobOutcome::Failed {
            error: format!("panic: {}", panic_message(p)),
        },
    };
    let elapsed = start.elapsed().as_secs_f64();
    write_outcome(&result, &timing_path(out_dir, &id), &outcome, elapsed)?;
    Ok(match outcome {
        JobOutcome::Ok(r) => {
            log::info!("{id}: ok, test accuracy {:.4}", r.mean_test_accuracy());
            JobReport {
                job_id: id,
                status: JobStatus::Ok,
                error: None,
            }
        }
        JobOutcome::Failed { error } => {
            log::warn!("{id}: failed: {error}");
            JobReport {
                job_id: id,
                status: JobStatus::Failed,
                error: Some(error),
            }
        }
    })
}

#[cfg(feature = "parallel")]
fn run_all(jobs: &[JobSpec], workers: usize, out_dir: &Path, force: bool) -> Result<Vec<JobReport>> {
    use rayon::prelude::*;
    if workers <= 1 {
        return jobs.iter().map(|j| run_job(j, out_dir, force)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| jobs.par_iter().map(|j| run_job(j, out_dir, force)).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_all(jobs: &[JobSpec], _workers: usize, out_dir: &Path, force: bool) -> Result<Vec<JobReport>> {
    jobs.iter().map(|j| run_job(j, out_dir, force)).collect()
}

/// Runs jobs on `workers` threads (sequentially for 1, or when built
/// without the `parallel` feature). Each job writes its own result file;
/// a failing job is recorded and does not stop the others. Jobs with an
/// existing ok result are skipped unless `force`.
pub fn execute_local(jobs: &[JobSpec], workers: usize, out_dir: &Path, force: bool) -> Result<ExecutionSummary> {
    if workers == 0 {
        return Err(Error::key("workers", "must be >= 1"));
    }
    let dir = out_dir.join(RESULTS_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"").map_err(|e| Error::io(&dir, e))?;
    let _ = std::fs::remove_file(&probe);
    Ok(ExecutionSummary {
        jobs: run_all(jobs, workers, out_dir, force)?,
    })
}
