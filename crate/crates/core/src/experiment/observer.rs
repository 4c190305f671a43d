use crate::models::Model;
use crate::netcore::ParamSet;
use crate::trainers::{EpochRecord, Observer};
use crate::Result;

/// Tracks the best validation accuracy (strict improvement, so ties keep
/// the earlier epoch), snapshots its parameters, and stops once the
/// number of epochs without improvement exceeds `patience`.
#[derive(Debug, Clone, Default)]
pub struct BestValObserver {
    patience: Option<usize>,
    best: Option<(usize, f64)>,
    snapshot: Option<ParamSet>,
    since_improvement: usize,
}

impl BestValObserver {
    pub fn new(patience: Option<usize>) -> Self {
        Self {
            patience,
            ..Default::default()
        }
    }

    /// Records one epoch; returns `true` when training should stop.
    pub fn update(&mut self, epoch: usize, val_accuracy: f64, params: &ParamSet) -> bool {
        let improved = self.best.is_none_or(|(_, b)| val_accuracy > b);
        if improved {
            self.best = Some((epoch, val_accuracy));
            self.snapshot = Some(params.clone());
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        self.patience.is_some_and(|p| self.since_improvement > p)
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.best.map(|(_, a)| a)
    }

    pub fn snapshot(&self) -> Option<&ParamSet> {
        self.snapshot.as_ref()
    }
}

impl Observer for BestValObserver {
    fn after_epoch(&mut self, record: &EpochRecord, model: &Model) -> Result<bool> {
        Ok(self.update(record.epoch, record.val_accuracy, model.params()))
    }
}
