use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde_yaml::{Mapping, Value};

use super::ExperimentConfig;
use crate::{Error, Result};

/// Where a configuration value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Flag,
    File,
    Default,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Flag => "flag",
            Source::File => "file",
            Source::Default => "default",
        })
    }
}

/// Final value and origin of every configuration key, in field order.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub entries: Vec<(String, String, Source)>,
}

impl Provenance {
    pub fn source_of(&self, key: &str) -> Option<Source> {
        self.entries.iter().find(|(k, _, _)| k == key).map(|(_, _, s)| *s)
    }

    pub fn lines(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|(k, v, s)| format!("{k} = {v} ({s})"))
            .collect()
    }
}

const ALIASES: [(&str, &str); 2] = [("npath", "net_widths"), ("npath_dom", "net_widths_dom")];

fn canonical(key: &str) -> &str {
    ALIASES
        .iter()
        .find(|(alias, _)| *alias == key)
        .map_or(key, |(_, canon)| canon)
}

/// Parses one `key=value` override; the value is read as a YAML scalar
/// or flow collection.
pub fn parse_set(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{s}` is not key=value")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::InvalidConfig(format!("override `{s}` has an empty key")));
    }
    let value: Value =
        serde_yaml::from_str(v).map_err(|e| Error::key(k, format!("cannot parse override value: {e}")))?;
    Ok((canonical(k).to_string(), value))
}

fn read_mapping(path: &Path) -> Result<Mapping> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value =
        serde_yaml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    match value {
        Value::Null => Ok(Mapping::new()),
        Value::Mapping(m) => {
            let mut out = Mapping::new();
            for (k, v) in m {
                let key = k
                    .as_str()
                    .ok_or_else(|| Error::InvalidConfig(format!("{}: non-string key", path.display())))?;
                let canon = canonical(key).to_string();
                if out.contains_key(canon.as_str()) {
                    return Err(Error::key(&canon, "given twice (directly and through an alias)"));
                }
                out.insert(Value::String(canon), v);
            }
            Ok(out)
        }
        _ => Err(Error::InvalidConfig(format!("{}: expected a mapping", path.display()))),
    }
}

/// Reads an optional config file, applies `key=value` overrides on top,
/// and records where each final value came from.
pub fn load_config(file: Option<&Path>, sets: &[String]) -> Result<(ExperimentConfig, Provenance)> {
    let mut mapping = match file {
        Some(p) => read_mapping(p)?,
        None => Mapping::new(),
    };
    let file_keys: BTreeSet<String> = mapping.keys().filter_map(|k| k.as_str().map(str::to_string)).collect();
    let mut flag_keys = BTreeSet::new();
    for s in sets {
        let (k, v) = parse_set(s)?;
        mapping.insert(Value::String(k.clone()), v);
        flag_keys.insert(k);
    }
    let mut cfg: ExperimentConfig = serde_yaml::from_value(Value::Mapping(mapping)).map_err(|e| match file {
        Some(p) => Error::InvalidConfig(format!("{}: {e}", p.display())),
        None => Error::InvalidConfig(e.to_string()),
    })?;
    cfg.base_dir = file.and_then(Path::parent).map(Path::to_path_buf);

    let rendered = serde_yaml::to_value(&cfg).map_err(|e| Error::Format(e.to_string()))?;
    let mut entries = Vec::new();
    if let Value::Mapping(m) = rendered {
        for (k, v) in m {
            let key = k.as_str().unwrap_or_default().to_string();
            let text = serde_json::to_string(&v).map_err(|e| Error::Format(e.to_string()))?;
            let source = if flag_keys.contains(&key) {
                Source::Flag
            } else if file_keys.contains(&key) {
                Source::File
            } else {
                Source::Default
            };
            entries.push((key, text, source));
        }
    }
    Ok((cfg, Provenance { entries }))
}
