use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning rate held over an inclusive, 1-indexed epoch range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrPhase {
    pub first_epoch: usize,
    pub last_epoch: usize,
    pub learning_rate: f64,
}

/// Optimization schedule and sampling settings of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPlan {
    pub epochs: usize,
    pub lr_phases: Vec<LrPhase>,
    pub batch_size: usize,
    /// Side of square training patches; a multiple of the block size.
    pub patch_size: usize,
    pub seed: u64,
    pub augmentation_enabled: bool,
    /// Patches drawn per epoch when `fixed_patches` is unset.
    pub patches_per_epoch: usize,
    /// When set, this many patches are drawn once and every epoch visits
    /// each of them exactly once.
    pub fixed_patches: Option<usize>,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            epochs: 100,
            lr_phases: vec![
                LrPhase {
                    first_epoch: 1,
                    last_epoch: 50,
                    learning_rate: 1e-3,
                },
                LrPhase {
                    first_epoch: 51,
                    last_epoch: 80,
                    learning_rate: 1e-4,
                },
                LrPhase {
                    first_epoch: 81,
                    last_epoch: 100,
                    learning_rate: 1e-5,
                },
            ],
            batch_size: 64,
            patch_size: 96,
            seed: 0,
            augmentation_enabled: true,
            patches_per_epoch: 6400,
            fixed_patches: None,
        }
    }
}

impl TrainPlan {
    /// Shortens or lengthens the run, stretching phase boundaries in
    /// proportion and dropping phases that become empty.
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        if epochs == self.epochs || self.epochs == 0 {
            self.epochs = epochs;
            return self;
        }
        let old = self.epochs as f64;
        let mut phases = Vec::new();
        let mut next = 1;
        for p in &self.lr_phases {
            let last = ((p.last_epoch as f64 * epochs as f64 / old).round() as usize).min(epochs);
            if last >= next {
                phases.push(LrPhase {
                    first_epoch: next,
                    last_epoch: last,
                    learning_rate: p.learning_rate,
                });
                next = last + 1;
            }
        }
        if let Some(tail) = phases.last_mut() {
            tail.last_epoch = epochs;
        }
        self.epochs = epochs;
        self.lr_phases = phases;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 || self.patch_size == 0 {
            return Err(Error::Config(
                "batch_size and patch_size must be positive".into(),
            ));
        }
        if self.fixed_patches == Some(0)
            || (self.fixed_patches.is_none() && self.patches_per_epoch == 0)
        {
            return Err(Error::Config(
                "an epoch must contain at least one patch".into(),
            ));
        }
        let mut expected = 1;
        for p in &self.lr_phases {
            if p.first_epoch != expected || p.last_epoch < p.first_epoch {
                return Err(Error::Config(format!(
                    "learning-rate phase {}-{} is not contiguous (expected to start at {expected})",
                    p.first_epoch, p.last_epoch
                )));
            }
            if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
                return Err(Error::Config(format!(
                    "learning rate {} must be positive",
                    p.learning_rate
                )));
            }
            expected = p.last_epoch + 1;
        }
        if expected != self.epochs + 1 {
            return Err(Error::Config(format!(
                "learning-rate phases cover epochs 1-{} but the plan has {}",
                expected - 1,
                self.epochs
            )));
        }
        Ok(())
    }
}

/// Learning rate of the phase containing `epoch` (1-indexed).
pub fn lr_at_epoch(plan: &TrainPlan, epoch: usize) -> Result<f64> {
    if epoch == 0 || epoch > plan.epochs {
        return Err(Error::usage(
            "lr_at_epoch",
            format!("epoch {epoch} outside 1..={}", plan.epochs),
        ));
    }
    plan.lr_phases
        .iter()
        .find(|p| (p.first_epoch..=p.last_epoch).contains(&epoch))
        .map(|p| p.learning_rate)
        .ok_or_else(|| Error::Config(format!("no learning-rate phase covers epoch {epoch}")))
}
