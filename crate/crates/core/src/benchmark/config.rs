use std::fmt;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_yaml::{Mapping, Value};

use crate::experiment::{validate_config, ExperimentConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Float(f) => Some(f),
            _ => None,
        }
    }

    pub fn to_yaml(&self) -> Value {
        match self {
            ParamValue::Bool(b) => Value::Bool(*b),
            ParamValue::Int(i) => Value::Number((*i).into()),
            ParamValue::Float(f) => Value::Number((*f).into()),
            ParamValue::Str(s) => Value::String(s.clone()),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Str(s) => f.write_str(s),
        }
    }
}

pub type ParamMap = IndexMap<String, ParamValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    Uniform,
    Loguniform,
    IntUniform,
    Categorical,
    GridList,
}

/// A named hyperparameter distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDistribution {
    pub name: String,
    pub kind: DistKind,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    #[serde(default)]
    pub values: Option<Vec<ParamValue>>,
    /// Sampled values are rounded to the nearest multiple of `step`.
    #[serde(default)]
    pub step: Option<f64>,
    /// Number of grid points on a continuous or integer axis.
    #[serde(default)]
    pub count: Option<usize>,
}

impl ParamDistribution {
    pub fn uniform(name: &str, lo: f64, hi: f64) -> Self {
        Self::bounded(name, DistKind::Uniform, lo, hi)
    }

    pub fn loguniform(name: &str, lo: f64, hi: f64) -> Self {
        Self::bounded(name, DistKind::Loguniform, lo, hi)
    }

    pub fn int_uniform(name: &str, lo: i64, hi: i64) -> Self {
        Self::bounded(name, DistKind::IntUniform, lo as f64, hi as f64)
    }

    pub fn categorical(name: &str, values: Vec<ParamValue>) -> Self {
        Self::listed(name, DistKind::Categorical, values)
    }

    pub fn grid_list(name: &str, values: Vec<ParamValue>) -> Self {
        Self::listed(name, DistKind::GridList, values)
    }

    fn bounded(name: &str, kind: DistKind, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            kind,
            lo: Some(lo),
            hi: Some(hi),
            values: None,
            step: None,
            count: None,
        }
    }

    fn listed(name: &str, kind: DistKind, values: Vec<ParamValue>) -> Self {
        Self {
            name: name.into(),
            kind,
            lo: None,
            hi: None,
            values: Some(values),
            step: None,
            count: None,
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = Some(step);
        self
    }

    pub fn with_count(mut self, count: usize) -> Self {
        self.count = Some(count);
        self
    }

    pub(crate) fn bounds(&self) -> (f64, f64) {
        (self.lo.unwrap_or(f64::NAN), self.hi.unwrap_or(f64::NAN))
    }

    /// Checks the distribution; `at` is the key path used in errors.
    pub fn validate(&self, at: &str) -> Result<()> {
        let err = |msg: String| Err(Error::key(format!("{at}.{}", self.name), msg));
        if self.name.is_empty() {
            return Err(Error::key(at, "distribution without a name"));
        }
        match self.kind {
            DistKind::Uniform | DistKind::Loguniform | DistKind::IntUniform => {
                let (Some(lo), Some(hi)) = (self.lo, self.hi) else {
                    return err("lo and hi are required".into());
                };
                if !(lo.is_finite() && hi.is_finite()) {
                    return err("bounds must be finite".into());
                }
                if self.values.is_some() {
                    return err("values only apply to categorical and grid_list".into());
                }
                if self.kind == DistKind::Loguniform && lo <= 0.0 {
                    return err("loguniform requires lo>0".into());
                }
                if self.kind == DistKind::IntUniform {
                    if lo.fract() != 0.0 || hi.fract() != 0.0 {
                        return err("int_uniform bounds must be integers".into());
                    }
                    if lo > hi {
                        return err("requires lo<=hi".into());
                    }
                } else if lo >= hi {
                    return err("requires lo<hi".into());
                }
            }
            DistKind::Categorical | DistKind::GridList => {
                match &self.values {
                    Some(v) if !v.is_empty() => {}
                    _ => return err("values must be a nonempty list".into()),
                }
                if self.lo.is_some() || self.hi.is_some() || self.step.is_some() {
                    return err("lo/hi/step only apply to numeric ranges".into());
                }
            }
        }
        if let Some(step) = self.step {
            if !(step.is_finite() && step > 0.0) {
                return err("step must be > 0".into());
            }
            let (lo, hi) = self.bounds();
            if (lo / step).ceil() * step > hi {
                return err(format!("no multiple of step {step} lies in [{lo}, {hi}]"));
            }
        }
        if self.count == Some(0) {
            return err("grid axis with zero points".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharedSpec {
    /// Pool size; defaults to `n_param_samples`.
    #[serde(default)]
    pub pool_size: Option<usize>,
    #[serde(default)]
    pub params: Vec<ParamDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub model: String,
    #[serde(default = "basic")]
    pub trainer: String,
    /// Private distributions.
    #[serde(default)]
    pub params: Vec<ParamDistribution>,
    /// Names taken from the shared pool.
    #[serde(default)]
    pub shared: Vec<String>,
}

fn basic() -> String {
    "basic".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    Random,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    #[serde(default)]
    pub mode: SamplingMode,
    #[serde(default = "one")]
    pub n_param_samples: usize,
    #[serde(default = "one")]
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn one() -> usize {
    1
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            mode: SamplingMode::Random,
            n_param_samples: 1,
            n_seeds: 1,
            base_seed: 0,
        }
    }
}

/// A benchmark: common experiment settings, an optional shared pool,
/// per-method sections and the sampling plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Any single-run keys; `te_d` lists the test domains to sweep.
    #[serde(default)]
    pub common: Mapping,
    #[serde(default)]
    pub shared: SharedSpec,
    pub methods: IndexMap<String, MethodSpec>,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

const RESERVED: [&str; 4] = ["model", "trainer", "seed", "te_d"];

fn safe_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl BenchmarkConfig {
    pub fn from_yaml_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_yaml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Test domains from `common.te_d` (a name or a list).
    pub fn test_domains(&self) -> Result<Vec<String>> {
        let v = self
            .common
            .get("te_d")
            .ok_or_else(|| Error::key("common.te_d", "required"))?;
        let list = match v {
            Value::String(s) => vec![s.clone()],
            other => serde_yaml::from_value::<Vec<String>>(other.clone())
                .map_err(|e| Error::key("common.te_d", e.to_string()))?,
        };
        if list.is_empty() {
            return Err(Error::key("common.te_d", "must list at least one domain"));
        }
        Ok(list)
    }

    pub fn pool_size(&self) -> usize {
        self.shared.pool_size.unwrap_or(self.sampling.n_param_samples)
    }

    fn uses_shared(&self) -> bool {
        self.methods.values().any(|m| !m.shared.is_empty())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sampling;
        if s.n_param_samples == 0 {
            return Err(Error::key("sampling.n_param_samples", "must be >= 1"));
        }
        if s.n_seeds == 0 {
            return Err(Error::key("sampling.n_seeds", "must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::key("methods", "at least one method is required"));
        }
        for d in self.test_domains()? {
            if !safe_name(&d) {
                return Err(Error::key(
                    "common.te_d",
                    format!("domain name `{d}` is not file-name safe"),
                ));
            }
        }
        for key in ["model", "trainer", "seed"] {
            if self.common.contains_key(key) {
                return Err(Error::key(
                    format!("common.{key}"),
                    "set per method or per job, not in common",
                ));
            }
        }
        let mut shared_names = Vec::new();
        for d in &self.shared.params {
            d.validate("shared.params")?;
            if shared_names.contains(&d.name) {
                return Err(Error::key(format!("shared.params.{}", d.name), "declared twice"));
            }
            shared_names.push(d.name.clone());
        }
        if self.uses_shared() && s.mode == SamplingMode::Random && s.n_param_samples > self.pool_size() {
            return Err(Error::key(
                "sampling.n_param_samples",
                format!("{} exceeds shared.pool_size {}", s.n_param_samples, self.pool_size()),
            ));
        }
        for (name, m) in &self.methods {
            let at = format!("methods.{name}");
            if !safe_name(name) {
                return Err(Error::key(at, "method name is not file-name safe"));
            }
            let mut seen: Vec<&str> = Vec::new();
            for r in &m.shared {
                if !shared_names.contains(r) {
                    return Err(Error::key(
                        format!("{at}.shared"),
                        format!("undeclared shared parameter `{r}`"),
                    ));
                }
                seen.push(r);
            }
            for d in &m.params {
                d.validate(&format!("{at}.params"))?;
                if seen.contains(&d.name.as_str()) {
                    return Err(Error::key(format!("{at}.params.{}", d.name), "declared twice"));
                }
                seen.push(&d.name);
            }
            for p in seen {
                if RESERVED.contains(&p) {
                    return Err(Error::key(format!("{at}.params.{p}"), "reserved name"));
                }
            }
            let dists = self.method_distributions(name)?;
            let probe = super::sample_params(&dists, 1, 0)?;
            let cfg = self.job_config(name, &probe[0], 0, &self.test_domains()?[0])?;
            validate_config(&cfg).map_err(|e| Error::key(at.clone(), e.to_string()))?;
        }
        Ok(())
    }

    /// Shared references first, then private distributions.
    pub fn method_distributions(&self, method: &str) -> Result<Vec<ParamDistribution>> {
        let m = self
            .methods
            .get(method)
            .ok_or_else(|| Error::key("methods", format!("unknown method `{method}`")))?;
        let mut out: Vec<ParamDistribution> = m
            .shared
            .iter()
            .filter_map(|r| self.shared.params.iter().find(|d| &d.name == r).cloned())
            .collect();
        out.extend(m.params.iter().cloned());
        Ok(out)
    }

    /// The single-run config of one job.
    pub fn job_config(
        &self,
        method: &str,
        params: &ParamMap,
        seed: u64,
        test_domain: &str,
    ) -> Result<ExperimentConfig> {
        let m = &self.methods[method];
        let mut map = self.common.clone();
        for (k, v) in params {
            map.insert(Value::String(k.clone()), v.to_yaml());
        }
        map.insert("model".into(), Value::String(m.model.clone()));
        map.insert("trainer".into(), Value::String(m.trainer.clone()));
        map.insert("seed".into(), Value::Number(seed.into()));
        map.insert("te_d".into(), Value::Sequence(vec![Value::String(test_domain.into())]));
        let mut cfg: ExperimentConfig = serde_yaml::from_value(Value::Mapping(map))
            .map_err(|e| Error::key(format!("methods.{method}"), e.to_string()))?;
        cfg.base_dir = self.base_dir.clone();
        // task descriptor paths are pinned so configs stay valid when moved
        if let Some(t) = &cfg.tpath {
            cfg.tpath = Some(cfg.resolve_path(t));
        }
        Ok(cfg)
    }
}

pub fn parse_benchmark_config(path: &Path) -> Result<BenchmarkConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg: BenchmarkConfig =
        serde_yaml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    cfg.base_dir = path.parent().map(Path::to_path_buf);
    cfg.validate()?;
    Ok(cfg)
}
