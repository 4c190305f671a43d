use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    /// Frozen parameters still collect gradients but are skipped by optimizers.
    pub frozen: bool,
}

/// Ordered collection of named parameters with paired gradient buffers.
///
/// Iteration follows insertion order, which fixes the flat index used by
/// [`ParamSet::scalar`] and the update order of optimizers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    params: IndexMap<String, Param>,
    seed: u64,
}

impl ParamSet {
    pub fn new(seed: u64) -> Self {
        Self {
            params: IndexMap::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::InvalidConfig(format!("duplicate parameter `{name}`")));
        }
        let grad = Tensor::zeros_like(&value);
        self.params.insert(
            name,
            Param {
                value,
                grad,
                frozen: false,
            },
        );
        Ok(())
    }

    /// Moves every parameter of `other` into this set under `prefix`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: ParamSet) -> Result<()> {
        for (name, p) in other.params {
            let full = format!("{prefix}{name}");
            if self.params.contains_key(&full) {
                return Err(Error::InvalidConfig(format!("duplicate parameter `{full}`")));
            }
            self.params.insert(full, p);
        }
        Ok(())
    }

    fn lookup(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Shape(format!("unknown parameter `{name}`")))
    }

    fn lookup_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Shape(format!("unknown parameter `{name}`")))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.lookup(name).map(|p| &p.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.lookup_mut(name).map(|p| &mut p.value)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        self.lookup(name).map(|p| &p.grad)
    }

    pub fn grad_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.lookup_mut(name).map(|p| &mut p.grad)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn freeze(&mut self, name: &str) -> Result<()> {
        self.lookup_mut(name)?.frozen = true;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (i, p) in self.params.values().enumerate() {
            if flat < p.value.len() {
                return (i, flat);
            }
            flat -= p.value.len();
        }
        panic!("flat parameter index out of range");
    }

    /// Scalar at flat index `i` (parameters concatenated in insertion order).
    pub fn scalar(&self, i: usize) -> f64 {
        let (p, j) = self.locate(i);
        self.params[p].value.data()[j]
    }

    pub fn set_scalar(&mut self, i: usize, v: f64) {
        let (p, j) = self.locate(i);
        self.params[p].value.data_mut()[j] = v;
    }

    pub fn grad_scalar(&self, i: usize) -> f64 {
        let (p, j) = self.locate(i);
        self.params[p].grad.data()[j]
    }

    /// Name of the parameter owning flat index `i`.
    pub fn scalar_owner(&self, i: usize) -> &str {
        let (p, _) = self.locate(i);
        self.params.get_index(p).map(|(k, _)| k.as_str()).unwrap()
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.params
            .values()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params
            .values()
            .flat_map(|p| p.grad.data().iter().copied())
            .collect()
    }

    /// Copies parameter values (not gradients) from a set with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamSet) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Shape("parameter sets differ in layout".into()));
        }
        for ((na, a), (nb, b)) in self.params.iter_mut().zip(&other.params) {
            if na != nb {
                return Err(Error::Shape(format!("parameter `{na}` vs `{nb}`")));
            }
            a.value.check_same_shape(&b.value)?;
            a.value = b.value.clone();
        }
        Ok(())
    }

    /// Adds `factor * other.grad` into this set's gradients, matched by name.
    pub fn add_grads_from(&mut self, other: &ParamSet, factor: f64) -> Result<()> {
        for (name, p) in &other.params {
            let dst = self.lookup_mut(name)?;
            dst.grad.check_same_shape(&p.grad)?;
            for (d, s) in dst.grad.data_mut().iter_mut().zip(p.grad.data()) {
                *d += factor * *s;
            }
        }
        Ok(())
    }

    /// Euclidean norm of all gradients.
    pub fn grad_norm(&self) -> f64 {
        self.params
            .values()
            .flat_map(|p| p.grad.data().iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}
