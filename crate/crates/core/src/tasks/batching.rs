use rand::seq::SliceRandom;

use super::DomainDataset;
use crate::netcore::Tensor;
use crate::rng::{derive_seed, seeded};

/// A mini-batch drawn from a single training domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Tensor,
    pub labels: Vec<usize>,
    /// Index of the source domain among the task's training domains.
    pub domain: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn domain_labels(&self) -> Vec<usize> {
        vec![self.domain; self.labels.len()]
    }

    pub fn from_indices(data: &DomainDataset, domain: usize, indices: &[usize]) -> Batch {
        Batch {
            features: data.features.select_rows(indices),
            labels: indices.iter().map(|&i| data.labels[i]).collect(),
            domain,
        }
    }
}

/// A subset of one domain's samples.
#[derive(Debug, Clone)]
pub struct DomainView<'a> {
    pub domain: usize,
    pub data: &'a DomainDataset,
    pub indices: Vec<usize>,
}

impl DomainView<'_> {
    /// All samples of the view as one batch, in view order.
    pub fn full_batch(&self) -> Batch {
        Batch::from_indices(self.data, self.domain, &self.indices)
    }
}

fn shuffled_chunks(view: &DomainView<'_>, batch_size: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
    let mut idx = view.indices.clone();
    idx.shuffle(&mut seeded(derive_seed(epoch_seed, view.domain as u64)));
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// One pass over every view with a fresh per-epoch shuffle. Each batch
/// holds a single domain; domains are interleaved round-robin and the last
/// batch of a domain may be short.
pub fn minibatches(views: &[DomainView<'_>], batch_size: usize, epoch_seed: u64) -> Vec<Batch> {
    let chunks: Vec<Vec<Vec<usize>>> = views
        .iter()
        .map(|v| shuffled_chunks(v, batch_size, epoch_seed))
        .collect();
    let rounds = chunks.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::new();
    for r in 0..rounds {
        for (v, c) in views.iter().zip(&chunks) {
            if let Some(idx) = c.get(r) {
                out.push(Batch::from_indices(v.data, v.domain, idx));
            }
        }
    }
    out
}

/// Groups an epoch into training steps holding one batch per domain.
///
/// The number of steps is the largest per-domain batch count; domains with
/// fewer batches wrap around to their first batches.
pub fn domain_steps(views: &[DomainView<'_>], batch_size: usize, epoch_seed: u64) -> Vec<Vec<Batch>> {
    let chunks: Vec<Vec<Vec<usize>>> = views
        .iter()
        .map(|v| shuffled_chunks(v, batch_size, epoch_seed))
        .collect();
    let steps = chunks.iter().map(Vec::len).max().unwrap_or(0);
    (0..steps)
        .map(|s| {
            views
                .iter()
                .zip(&chunks)
                .filter(|(_, c)| !c.is_empty())
                .map(|(v, c)| Batch::from_indices(v.data, v.domain, &c[s % c.len()]))
                .collect()
        })
        .collect()
}
