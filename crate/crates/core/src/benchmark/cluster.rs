use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::execute::RESULTS_DIR;
use super::jobs::JobSpec;
use super::write_atomic;
use crate::{Error, Result};

pub const CLUSTER_DIR: &str = "cluster";
pub const SUBMIT_ALL: &str = "submit_all.sh";

/// Scheduler header settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTemplate {
    pub partition: String,
    /// Wall-clock limit, e.g. `01:00:00`.
    pub time: String,
    /// Memory request, e.g. `4G`.
    pub mem: String,
    /// Command used to invoke the CLI on the cluster.
    pub cli: String,
}

impl Default for ClusterTemplate {
    fn default() -> Self {
        Self {
            partition: "cpu".into(),
            time: "01:00:00".into(),
            mem: "4G".into(),
            cli: "dgkit".into(),
        }
    }
}

fn job_script(job: &JobSpec, t: &ClusterTemplate) -> String {
    let id = job.job_id();
    let mut s = String::new();
    let _ = writeln!(s, "#!/bin/sh");
    let _ = writeln!(s, "#SBATCH --job-name={id}");
    let _ = writeln!(s, "#SBATCH --partition={}", t.partition);
    let _ = writeln!(s, "#SBATCH --time={}", t.time);
    let _ = writeln!(s, "#SBATCH --mem={}", t.mem);
    let _ = writeln!(s, "#SBATCH --cpus-per-task=1");
    let _ = writeln!(s, "#SBATCH --output={id}.log");
    let _ = writeln!(s, "set -eu");
    let _ = writeln!(s, "cd \"$(dirname \"$0\")\"");
    let _ = writeln!(s, "{} run --config {id}.yaml --out ../{RESULTS_DIR}/{id}.json", t.cli);
    s
}

/// Writes `cluster/<job>.yaml` (the single-run config) and
/// `cluster/<job>.sh` for every job, plus `cluster/submit_all.sh`.
/// Output depends only on the jobs and the template.
pub fn emit_cluster_scripts(jobs: &[JobSpec], out_dir: &Path, template: &ClusterTemplate) -> Result<Vec<PathBuf>> {
    let dir = out_dir.join(CLUSTER_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::with_capacity(jobs.len() + 1);
    let mut submit = String::from("#!/bin/sh\nset -eu\ncd \"$(dirname \"$0\")\"\n");
    for job in jobs {
        let id = job.job_id();
        let yaml = job.config.to_yaml()?;
        write_atomic(&dir.join(format!("{id}.yaml")), yaml.as_bytes())?;
        let script = dir.join(format!("{id}.sh"));
        write_atomic(&script, job_script(job, template).as_bytes())?;
        set_executable(&script)?;
        let _ = writeln!(submit, "sbatch {id}.sh");
        written.push(script);
    }
    let all = dir.join(SUBMIT_ALL);
    write_atomic(&all, submit.as_bytes())?;
    set_executable(&all)?;
    written.push(all);
    Ok(written)
}

#[cfg(unix)]
fn set_executable(p: &Path) -> Result<()> {
    use std::os::unix::fs::PermissionsExt;
    std::fs::set_permissions(p, std::fs::Permissions::from_mode(0o755)).map_err(|e| Error::io(p, e))
}

#[cfg(not(unix))]
fn set_executable(_: &Path) -> Result<()> {
    Ok(())
}
