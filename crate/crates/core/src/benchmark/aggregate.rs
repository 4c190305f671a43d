use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::execute::{read_outcome, read_timing, result_path, timing_path, JobOutcome};
use super::jobs::{param_columns, read_manifest};
use crate::{Error, Result};

pub const RESULTS_TABLE: &str = "results.csv";
pub const TIMINGS_TABLE: &str = "timings.csv";

/// Leading columns of the results table; parameter columns follow.
pub const FIXED_COLUMNS: [&str; 15] = [
    "job_index",
    "job_id",
    "method",
    "model",
    "trainer",
    "param_index",
    "seed_index",
    "seed",
    "test_domain",
    "status",
    "val_accuracy",
    "test_accuracy",
    "selected_epoch",
    "epochs_run",
    "error",
];

/// One row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub job_index: usize,
    pub job_id: String,
    pub method: String,
    pub model: String,
    pub trainer: String,
    pub param_index: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub test_domain: String,
    pub ok: bool,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub selected_epoch: Option<usize>,
    pub epochs_run: Option<usize>,
    pub error: String,
    /// Parameter name → rendered value, blank when the job lacks it.
    pub params: IndexMap<String, String>,
    pub wall_time_s: Option<f64>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

impl ResultRow {
    fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.job_index.to_string(),
            self.job_id.clone(),
            self.method.clone(),
            self.model.clone(),
            self.trainer.clone(),
            self.param_index.to_string(),
            self.seed_index.to_string(),
            self.seed.to_string(),
            self.test_domain.clone(),
            if self.ok { "ok" } else { "failed" }.to_string(),
            opt(&self.val_accuracy),
            opt(&self.test_accuracy),
            opt(&self.selected_epoch),
            opt(&self.epochs_run),
            self.error.clone(),
        ];
        r.extend(self.params.values().cloned());
        r
    }
}

/// Collects one row per manifest job; missing or unreadable result files
/// become failed rows.
pub fn collect_rows(out_dir: &Path) -> Result<Vec<ResultRow>> {
    let jobs = read_manifest(out_dir)?;
    let columns = param_columns(&jobs);
    let mut rows = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let id = job.job_id();
        let params = columns
            .iter()
            .map(|c| {
                (
                    c.clone(),
                    job.params.get(c).map_or_else(String::new, ToString::to_string),
                )
            })
            .collect();
        let mut row = ResultRow {
            job_index: job.job_index,
            job_id: id.clone(),
            method: job.method.clone(),
            model: job.config.model.clone(),
            trainer: job.config.trainer.clone(),
            param_index: job.param_index,
            seed_index: job.seed_index,
            seed: job.seed,
            test_domain: job.test_domain.clone(),
            ok: false,
            val_accuracy: None,
            test_accuracy: None,
            selected_epoch: None,
            epochs_run: None,
            error: String::new(),
            params,
            wall_time_s: read_timing(&timing_path(out_dir, &id)).map(|t| t.wall_time_s),
        };
        match read_outcome(&result_path(out_dir, &id)) {
            Ok(JobOutcome::Ok(r)) => {
                row.ok = true;
                row.val_accuracy = Some(r.val_accuracy);
                row.test_accuracy = r.test_accuracy.get(&job.test_domain).copied();
                row.selected_epoch = Some(r.selected_epoch);
                row.epochs_run = Some(r.epochs_run);
            }
            Ok(JobOutcome::Failed { error }) => row.error = error,
            Err(e) => {
                log::warn!("{id}: unreadable result: {e}");
                row.error = format!("unreadable result: {e}");
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Writes `results.csv` (deterministic) and `timings.csv` into `out_dir`
/// and returns the path of the results table.
pub fn aggregate(out_dir: &Path) -> Result<PathBuf> {
    let rows = collect_rows(out_dir)?;
    let columns = param_columns(&read_manifest(out_dir)?);
    let path = out_dir.join(RESULTS_TABLE);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(columns);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    for r in &rows {
        w.write_record(r.record()).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    super::write_atomic(&path, &bytes)?;

    let mut t = csv::Writer::from_writer(Vec::new());
    t.write_record(["job_id", "wall_time_s"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for r in &rows {
        t.write_record([r.job_id.clone(), opt(&r.wall_time_s)])
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = t.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    super::write_atomic(&out_dir.join(TIMINGS_TABLE), &bytes)?;
    Ok(path)
}

/// A results table read back for charting.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub param_columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub job_index: usize,
    pub method: String,
    pub ok: bool,
    pub test_accuracy: Option<f64>,
    pub params: Vec<String>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < FIXED_COLUMNS.len() || header[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
        return Err(Error::InvalidConfig(format!(
            "{}: not a results table (unexpected header)",
            path.display()
        )));
    }
    let col = |name: &str| FIXED_COLUMNS.iter().position(|c| *c == name).unwrap();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            msg: e.to_string(),
        })?;
        let field = |n: &str| rec.get(col(n)).unwrap_or_default();
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            msg: msg.to_string(),
        };
        let acc = field("test_accuracy");
        rows.push(TableRow {
            job_index: field("job_index").parse().map_err(|_| bad("bad job_index"))?,
            method: field("method").to_string(),
            ok: field("status") == "ok",
            test_accuracy: if acc.is_empty() {
                None
            } else {
                Some(acc.parse().map_err(|_| bad("bad test_accuracy"))?)
            },
            params: rec.iter().skip(FIXED_COLUMNS.len()).map(str::to_string).collect(),
        });
    }
    Ok(Table {
        param_columns: header[FIXED_COLUMNS.len()..].to_vec(),
        rows,
    })
}
