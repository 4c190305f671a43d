//! Synthetic built-in tasks.
//!
//! `spurious_blobs` plants a feature that is strongly predictive on the
//! training domains and anti-predictive on the test domains, so a learner
//! that latches onto it fails under the shift. `rotated_moons` is the
//! classic two-moons problem with one rotation angle per domain.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{task_from_datasets, DomainDataset, Task, DEFAULT_VAL_FRACTION};
use crate::netcore::Tensor;
use crate::rng::{derive_seed, seeded, DgRng};
use crate::{Error, Result};

/// Parameters of the spurious-feature task.
///
/// Features are `[x0, x1, s]`. For label sign `y = ±1`, the invariant
/// coordinates are `x0, x1 ~ N(y·mu_inv, sigma_inv²)` in every domain.
/// The spurious coordinate is `s = y·ρ·mu_sp + c_d + N(0, sigma_sp²)` with
/// `ρ = +1` on training domains and `ρ = −1` on test domains. Training domain
/// `k` of `K` is shifted by `c_d = (k − (K−1)/2)·domain_shift`; test domains
/// are unshifted. The shift gives domains a detectable signature in `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpuriousBlobsParams {
    pub mu_inv: f64,
    pub sigma_inv: f64,
    pub mu_sp: f64,
    pub sigma_sp: f64,
    pub domain_shift: f64,
    pub n_train_domains: usize,
    pub n_test_domains: usize,
    pub n_per_domain: usize,
}

impl Default for SpuriousBlobsParams {
    fn default() -> Self {
        Self {
            mu_inv: 1.0,
            sigma_inv: 1.0,
            mu_sp: 2.0,
            sigma_sp: 0.3,
            domain_shift: 1.2,
            n_train_domains: 3,
            n_test_domains: 1,
            n_per_domain: 500,
        }
    }
}

impl SpuriousBlobsParams {
    fn validate(&self) -> Result<()> {
        let positive = [self.mu_inv, self.sigma_inv, self.mu_sp, self.sigma_sp];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Task(
                "spurious_blobs: means and deviations must be positive".into(),
            ));
        }
        if self.mu_sp / self.sigma_sp <= self.mu_inv / self.sigma_inv {
            return Err(Error::Task(format!(
                "spurious_blobs: spurious margin {:.3} must exceed invariant margin {:.3}",
                self.mu_sp / self.sigma_sp,
                self.mu_inv / self.sigma_inv
            )));
        }
        if self.n_train_domains == 0 || self.n_test_domains == 0 || self.n_per_domain < 2 {
            return Err(Error::Task(
                "spurious_blobs: need >= 1 training domain, >= 1 test domain, >= 2 samples each".into(),
            ));
        }
        if !(self.domain_shift.is_finite() && self.domain_shift >= 0.0) || self.max_shift() >= self.mu_sp {
            return Err(Error::Task(format!(
                "spurious_blobs: domain shift {} would erase the spurious margin",
                self.domain_shift
            )));
        }
        Ok(())
    }

    fn max_shift(&self) -> f64 {
        (self.n_train_domains as f64 - 1.0) / 2.0 * self.domain_shift
    }

    /// Shift of the spurious coordinate for training domain `k`.
    pub fn shift(&self, k: usize) -> f64 {
        (k as f64 - (self.n_train_domains as f64 - 1.0) / 2.0) * self.domain_shift
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotatedMoonsParams {
    pub angles_deg: Vec<f64>,
    pub n_per_domain: usize,
    pub noise: f64,
    /// The last `n_test_domains` angles become test domains.
    pub n_test_domains: usize,
}

impl Default for RotatedMoonsParams {
    fn default() -> Self {
        Self {
            angles_deg: vec![0.0, 30.0, 60.0],
            n_per_domain: 200,
            noise: 0.1,
            n_test_domains: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BuiltinTask {
    SpuriousBlobs(SpuriousBlobsParams),
    RotatedMoons(RotatedMoonsParams),
}

impl BuiltinTask {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "spurious_blobs" => Some(BuiltinTask::SpuriousBlobs(Default::default())),
            "rotated_moons" => Some(BuiltinTask::RotatedMoons(Default::default())),
            _ => None,
        }
    }
}

fn normal(rng: &mut DgRng) -> f64 {
    rng.sample(StandardNormal)
}

fn spurious_blobs(p: &SpuriousBlobsParams, seed: u64) -> Result<Task> {
    p.validate()?;
    let total = p.n_train_domains + p.n_test_domains;
    let mut datasets = Vec::with_capacity(total);
    let mut test = Vec::new();
    for k in 0..total {
        let is_test = k >= p.n_train_domains;
        let (rho, shift) = if is_test { (-1.0, 0.0) } else { (1.0, p.shift(k)) };
        let mut rng = seeded(derive_seed(seed, k as u64));
        let mut data = Vec::with_capacity(p.n_per_domain * 3);
        let mut labels = Vec::with_capacity(p.n_per_domain);
        for i in 0..p.n_per_domain {
            let y = i % 2;
            let sign = if y == 1 { 1.0 } else { -1.0 };
            data.push(sign * p.mu_inv + p.sigma_inv * normal(&mut rng));
            data.push(sign * p.mu_inv + p.sigma_inv * normal(&mut rng));
            data.push(sign * rho * p.mu_sp + shift + p.sigma_sp * normal(&mut rng));
            labels.push(y);
        }
        let name = format!("env{k}");
        if is_test {
            test.push(name.clone());
        }
        let features = Tensor::new(vec![p.n_per_domain, 3], data)?;
        datasets.push(DomainDataset::new(name, features, labels, 2)?);
    }
    task_from_datasets("spurious_blobs", datasets, &test, DEFAULT_VAL_FRACTION)
}

fn rotated_moons(p: &RotatedMoonsParams, seed: u64) -> Result<Task> {
    if p.angles_deg.len() < 2 || p.n_test_domains == 0 || p.n_test_domains >= p.angles_deg.len() {
        return Err(Error::Task(
            "rotated_moons: need >= 2 angles and 1..n_angles-1 test domains".into(),
        ));
    }
    if p.n_per_domain < 2 || !(p.noise.is_finite() && p.noise >= 0.0) {
        return Err(Error::Task("rotated_moons: need >= 2 samples and noise >= 0".into()));
    }
    let mut datasets = Vec::new();
    let mut test = Vec::new();
    let first_test = p.angles_deg.len() - p.n_test_domains;
    for (k, &angle) in p.angles_deg.iter().enumerate() {
        let mut rng = seeded(derive_seed(seed, k as u64));
        let (s, c) = angle.to_radians().sin_cos();
        let mut data = Vec::with_capacity(p.n_per_domain * 2);
        let mut labels = Vec::with_capacity(p.n_per_domain);
        for i in 0..p.n_per_domain {
            let y = i % 2;
            let t = rng.random_range(0.0..std::f64::consts::PI);
            // moons centred at the origin
            let (mx, my) = if y == 0 {
                (t.cos() - 0.5, t.sin() - 0.25)
            } else {
                (0.5 - t.cos(), 0.25 - t.sin())
            };
            let x = mx + p.noise * normal(&mut rng);
            let z = my + p.noise * normal(&mut rng);
            data.push(c * x - s * z);
            data.push(s * x + c * z);
            labels.push(y);
        }
        let name = format!("rot{angle}");
        if k >= first_test {
            test.push(name.clone());
        }
        datasets.push(DomainDataset::new(
            name,
            Tensor::new(vec![p.n_per_domain, 2], data)?,
            labels,
            2,
        )?);
    }
    task_from_datasets("rotated_moons", datasets, &test, DEFAULT_VAL_FRACTION)
}

pub fn builtin_task(kind: &BuiltinTask, seed: u64) -> Result<Task> {
    match kind {
        BuiltinTask::SpuriousBlobs(p) => spurious_blobs(p, seed),
        BuiltinTask::RotatedMoons(p) => rotated_moons(p, seed),
    }
}
