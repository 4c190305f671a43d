//! The benchmark protocol: sample hyperparameters, enumerate a job matrix,
//! execute it locally or emit cluster scripts, aggregate the per-job
//! results into a table and chart it.
//!
//! A benchmark file has four sections:
//!
//! ```yaml
//! common:            # single-run keys applied to every job
//!   task: spurious_blobs
//!   te_d: [d2, d3]   # one job per test domain
//!   epos: 10
//! shared:            # optional pool drawn once and reused across methods
//!   pool_size: 4
//!   params:
//!     - {name: lr, kind: loguniform, lo: 0.0001, hi: 0.01}
//! methods:
//!   erm: {model: erm, shared: [lr]}
//!   dann:
//!     model: dann
//!     shared: [lr]
//!     params:
//!       - {name: gamma_reg_dann, kind: uniform, lo: 0.1, hi: 10}
//! sampling: {mode: random, n_param_samples: 2, n_seeds: 2, base_seed: 0}
//! ```
//!
//! Output layout under the output directory: `jobs.json` (the manifest),
//! `results/<job>.json` plus a `<job>.timing.json` sidecar per job,
//! `results.csv`, `timings.csv`, the SVG charts and, for cluster mode,
//! `cluster/`.

mod aggregate;
mod charts;
mod cluster;
mod config;
mod execute;
mod jobs;
mod sampling;

pub use aggregate::{
    aggregate, collect_rows, read_table, ResultRow, Table, TableRow, FIXED_COLUMNS, RESULTS_TABLE, TIMINGS_TABLE,
};
pub use charts::{distribution_svg, nice_ticks, quantile, render_charts, scatter_svg, DISTRIBUTION_CHART};
pub use cluster::{emit_cluster_scripts, ClusterTemplate, CLUSTER_DIR, SUBMIT_ALL};
pub use config::{
    parse_benchmark_config, BenchmarkConfig, DistKind, MethodSpec, ParamDistribution, ParamMap, ParamValue,
    SamplingMode, SamplingSpec, SharedSpec,
};
pub use execute::{
    execute_local, read_outcome, read_timing, result_path, timing_path, write_outcome, ExecutionSummary, JobOutcome,
    JobReport, JobStatus, Timing, RESULTS_DIR,
};
pub use jobs::{
    enumerate_jobs, method_samples, param_columns, read_manifest, shared_pool, write_manifest, JobSpec, Manifest,
    MANIFEST,
};
pub use sampling::{axis_values, grid_params, sample_params};

use std::path::Path;

use crate::{Error, Result};

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
