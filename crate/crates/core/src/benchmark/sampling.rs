use rand::Rng;

use super::config::{DistKind, ParamDistribution, ParamMap, ParamValue};
use crate::rng::{seeded, DgRng};
use crate::{Error, Result};

/// Rounds to the nearest multiple of `step`, moving one step inward if
/// rounding left `[lo, hi]`.
fn round_to_step(v: f64, step: f64, lo: f64, hi: f64) -> f64 {
    let mut r = (v / step).round() * step;
    if r > hi {
        r = ((v / step).round() - 1.0) * step;
    } else if r < lo {
        r = ((v / step).round() + 1.0) * step;
    }
    r
}

fn draw(d: &ParamDistribution, rng: &mut DgRng) -> ParamValue {
    let (lo, hi) = d.bounds();
    let value = match d.kind {
        DistKind::Uniform => lo + (hi - lo) * rng.random::<f64>(),
        DistKind::Loguniform => (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp(),
        DistKind::IntUniform => {
            let i = rng.random_range(lo as i64..=hi as i64);
            return match d.step {
                Some(s) => ParamValue::Float(round_to_step(i as f64, s, lo, hi)),
                None => ParamValue::Int(i),
            };
        }
        DistKind::Categorical | DistKind::GridList => {
            let values = d.values.as_deref().unwrap_or_default();
            return values[rng.random_range(0..values.len())].clone();
        }
    };
    // exp(ln x) can land a hair outside the bounds
    let value = value.clamp(lo, hi);
    ParamValue::Float(match d.step {
        Some(s) => round_to_step(value, s, lo, hi),
        None => value,
    })
}

/// `n` parameter maps; within each map the distributions are drawn in
/// order from one stream seeded by `seed`.
pub fn sample_params(dists: &[ParamDistribution], n: usize, seed: u64) -> Result<Vec<ParamMap>> {
    for d in dists {
        d.validate("params")?;
    }
    let mut rng = seeded(seed);
    Ok((0..n)
        .map(|_| dists.iter().map(|d| (d.name.clone(), draw(d, &mut rng))).collect())
        .collect())
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (count - 1) as f64
            }
        })
        .collect()
}

/// Points of one grid axis.
pub fn axis_values(d: &ParamDistribution) -> Result<Vec<ParamValue>> {
    d.validate("params")?;
    let (lo, hi) = d.bounds();
    let step = |v: f64| d.step.map_or(v, |s| round_to_step(v, s, lo, hi));
    let out = match d.kind {
        DistKind::Categorical | DistKind::GridList => d.values.clone().unwrap_or_default(),
        DistKind::Uniform => {
            let n = d.count.ok_or_else(|| Error::key(&d.name, "grid axis needs `count`"))?;
            linspace(lo, hi, n)
                .into_iter()
                .map(|v| ParamValue::Float(step(v)))
                .collect()
        }
        DistKind::Loguniform => {
            let n = d.count.ok_or_else(|| Error::key(&d.name, "grid axis needs `count`"))?;
            linspace(lo.ln(), hi.ln(), n)
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    // pin the endpoints exactly
                    let x = if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        v.exp()
                    };
                    ParamValue::Float(step(x))
                })
                .collect()
        }
        DistKind::IntUniform => {
            let (a, b) = (lo as i64, hi as i64);
            let ints: Vec<i64> = match d.count {
                None => (a..=b).collect(),
                Some(n) => {
                    let mut v: Vec<i64> = linspace(lo, hi, n).into_iter().map(|x| x.round() as i64).collect();
                    v.dedup();
                    v
                }
            };
            ints.into_iter()
                .map(|i| match d.step {
                    Some(_) => ParamValue::Float(step(i as f64)),
                    None => ParamValue::Int(i),
                })
                .collect()
        }
    };
    if out.is_empty() {
        return Err(Error::key(&d.name, "grid axis with zero points"));
    }
    Ok(out)
}

/// Cartesian product of the axes, row-major with the first axis slowest.
pub fn grid_params(dists: &[ParamDistribution]) -> Result<Vec<ParamMap>> {
    let axes: Vec<Vec<ParamValue>> = dists.iter().map(axis_values).collect::<Result<_>>()?;
    let mut out = vec![ParamMap::new()];
    for (d, axis) in dists.iter().zip(&axes) {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for v in axis {
                let mut m = prefix.clone();
                m.insert(d.name.clone(), v.clone());
                next.push(m);
            }
        }
        out = next;
    }
    Ok(out)
}
