use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub const LR_MAX: f64 = 5e-4;
pub const LR_MIN: f64 = 5e-5;

/// Cosine annealing from `eta_max` to `eta_min`, restarted every stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CosineSchedule {
    pub eta_max: f64,
    pub eta_min: f64,
}

impl Default for CosineSchedule {
    fn default() -> Self {
        CosineSchedule {
            eta_max: LR_MAX,
            eta_min: LR_MIN,
        }
    }
}

impl CosineSchedule {
    /// `eta_min + (eta_max - eta_min) * (1 + cos(pi * e / period)) / 2`,
    /// with `e` clamped to `[0, period]`. A zero period stays at `eta_max`.
    pub fn lr(&self, epoch_in_stage: usize, period: usize) -> f64 {
        let e = epoch_in_stage.min(period);
        if e == 0 {
            return self.eta_max;
        }
        if e == period {
            return self.eta_min;
        }
        let phase = PI * e as f64 / period as f64;
        self.eta_min + 0.5 * (self.eta_max - self.eta_min) * (1.0 + phase.cos())
    }

    /// Rate for epoch `e` of a stage with `stage_epochs` epochs: the first
    /// epoch runs at `eta_max` and the last at `eta_min`.
    pub fn stage_lr(&self, epoch_in_stage: usize, stage_epochs: usize) -> f64 {
        self.lr(epoch_in_stage, stage_epochs.saturating_sub(1))
    }
}

/// Default-rate cosine schedule value at `epoch_in_stage` of period `stage_epochs`.
pub fn cosine_lr(epoch_in_stage: usize, stage_epochs: usize) -> f64 {
    CosineSchedule::default().lr(epoch_in_stage, stage_epochs)
}
