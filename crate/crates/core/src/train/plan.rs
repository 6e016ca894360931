use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step decay: the learning rate is multiplied by `gamma` every `step_epochs`
/// epochs. `step_epochs == 0` keeps it constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub step_epochs: usize,
    pub gamma: f32,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            step_epochs: 0,
            gamma: 0.1,
        }
    }
}

impl LrSchedule {
    /// Learning rate for a zero-based epoch.
    pub fn rate(&self, base: f32, epoch: usize) -> f32 {
        if self.step_epochs == 0 {
            base
        } else {
            base * self.gamma.powi((epoch / self.step_epochs) as i32)
        }
    }
}

/// Hyperparameters of one incremental training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPlan {
    pub epochs_per_step: usize,
    pub batch_size: usize,
    pub base_lr: f32,
    pub momentum: f32,
    /// Classifier learning rate at increment `i` is `base_lr * fc_lr_decay^(i-1)`.
    pub fc_lr_decay: f32,
    /// Required validation-accuracy gain, in percentage points, for increments
    /// that use the improvement criterion.
    pub target_improvement: f64,
    /// Attempts allowed per increment under the improvement criterion.
    pub max_repeats: usize,
    /// First increment (1-based) that uses the improvement criterion; earlier
    /// increments take the highest-validation-accuracy epoch.
    pub improvement_from_step: usize,
    pub rng_seed: u64,
    pub lr_schedule: LrSchedule,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            epochs_per_step: 50,
            batch_size: 32,
            base_lr: 0.01,
            momentum: 0.9,
            fc_lr_decay: 0.1,
            target_improvement: 1.0,
            max_repeats: 3,
            improvement_from_step: 3,
            rng_seed: 0,
            lr_schedule: LrSchedule::default(),
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("train plan: {what}")));
        if self.epochs_per_step == 0 {
            return bad("epochs_per_step must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return bad("base_lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.fc_lr_decay > 0.0 && self.fc_lr_decay <= 1.0) {
            return bad("fc_lr_decay must be in (0, 1]");
        }
        if self.max_repeats == 0 {
            return bad("max_repeats must be >= 1");
        }
        if !(self.target_improvement >= 0.0) {
            return bad("target_improvement must be non-negative");
        }
        if self.lr_schedule.step_epochs > 0 && !(self.lr_schedule.gamma > 0.0) {
            return bad("lr_schedule.gamma must be positive");
        }
        Ok(())
    }

    /// Classifier learning-rate multiplier at 1-based increment `step`.
    pub fn fc_lr_scale(&self, step: usize) -> f32 {
        self.fc_lr_decay.powi(step as i32 - 1)
    }
}
