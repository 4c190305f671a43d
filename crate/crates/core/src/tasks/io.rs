//! Loading tasks from disk: the folder layout and index ("path") files.
//!
//! Samples are `.vec` files holding one line of whitespace-separated floats.

use std::fs;
use std::path::{Path, PathBuf};

use super::{task_from_datasets, DomainDataset, Task};
use crate::netcore::Tensor;
use crate::{Error, Result};

pub fn parse_vec_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if values.is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "expected a single line of values".into(),
            });
        }
        let parsed: Result<Vec<f64>> = line
            .split_whitespace()
            .map(|tok| match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("malformed value `{tok}`"),
                }),
            })
            .collect();
        values = Some(parsed?);
    }
    values.ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "empty sample file".into(),
    })
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let keep = if want_dirs {
            path.is_dir()
        } else {
            path.is_file() && path.extension().is_some_and(|e| e == "vec")
        };
        if keep {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Collects rows, checking that every sample has the dimension of the first.
struct RowCollector {
    dim: Option<usize>,
    data: Vec<f64>,
    labels: Vec<usize>,
}

impl RowCollector {
    fn new(dim: Option<usize>) -> Self {
        Self {
            dim,
            data: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn push(&mut self, path: &Path, label: usize) -> Result<()> {
        let row = parse_vec_file(path)?;
        match self.dim {
            Some(d) if d != row.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    msg: format!("sample has {} values, task dimension is {d}", row.len()),
                })
            }
            None => self.dim = Some(row.len()),
            _ => {}
        }
        self.data.extend(row);
        self.labels.push(label);
        Ok(())
    }

    fn finish(self, name: &str, num_classes: usize) -> Result<DomainDataset> {
        let n = self.labels.len();
        let d = self.dim.unwrap_or(0);
        DomainDataset::new(name, Tensor::new(vec![n, d], self.data)?, self.labels, num_classes)
    }
}

/// Loads `root/<domain>/<class>/*.vec`. Domains, classes and files are read in
/// lexicographic order; a class's label is its rank among the class folders.
pub fn task_from_folder(root: &Path, test_domains: &[String], val_fraction: f64) -> Result<Task> {
    let domain_dirs = sorted_entries(root, true)?;
    if domain_dirs.is_empty() {
        return Err(Error::Task(format!("{}: no domain folders", root.display())));
    }
    let mut reference: Option<Vec<String>> = None;
    let mut dim = None;
    let mut datasets = Vec::new();
    for ddir in &domain_dirs {
        let domain = file_name(ddir);
        let class_dirs = sorted_entries(ddir, true)?;
        let classes: Vec<String> = class_dirs.iter().map(|p| file_name(p)).collect();
        match &reference {
            Some(r) if *r != classes => {
                return Err(Error::Task(format!(
                    "class set mismatch in domain {domain}: expected [{}], found [{}]",
                    r.join(", "),
                    classes.join(", ")
                )))
            }
            None => reference = Some(classes.clone()),
            _ => {}
        }
        let mut rows = RowCollector::new(dim);
        for (label, cdir) in class_dirs.iter().enumerate() {
            for f in sorted_entries(cdir, false)? {
                rows.push(&f, label)?;
            }
        }
        if rows.labels.is_empty() {
            return Err(Error::Task(format!("domain {domain} has no samples")));
        }
        dim = rows.dim;
        datasets.push(rows.finish(&domain, classes.len())?);
    }
    let name = file_name(root);
    task_from_datasets(&name, datasets, test_domains, val_fraction)
}

/// Loads domains from index files with one `<relative-path> <label>` record
/// per line (`#` starts a comment line). Paths resolve against `base_dir`;
/// a path listed twice contributes two samples.
pub fn task_from_pathfile(
    index_files: &[(String, PathBuf)],
    base_dir: &Path,
    num_classes: usize,
    test_domains: &[String],
    val_fraction: f64,
) -> Result<Task> {
    if num_classes == 0 {
        return Err(Error::key("num_classes", "must be >= 1"));
    }
    let mut dim = None;
    let mut datasets = Vec::new();
    for (domain, index) in index_files {
        let text = fs::read_to_string(index).map_err(|e| Error::io(index, e))?;
        let mut rows = RowCollector::new(dim);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: index.clone(),
                line: i + 1,
                msg,
            };
            let (rel, label) = line
                .rsplit_once(' ')
                .ok_or_else(|| parse_err("expected `<path> <label>`".into()))?;
            let label: usize = label
                .parse()
                .map_err(|_| parse_err(format!("label `{label}` is not a non-negative integer")))?;
            if label >= num_classes {
                return Err(parse_err(format!(
                    "label {label} >= declared class count {num_classes}"
                )));
            }
            let path = base_dir.join(rel);
            if !path.is_file() {
                return Err(parse_err(format!("referenced file {} not found", path.display())));
            }
            rows.push(&path, label)?;
        }
        if rows.labels.is_empty() {
            return Err(Error::Task(format!("domain {domain} has no samples")));
        }
        dim = rows.dim;
        datasets.push(rows.finish(domain, num_classes)?);
    }
    task_from_datasets("pathfile", datasets, test_domains, val_fraction)
}
