//! Gradient-update accounting, one update per (possibly partial) batch.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::curriculum::StagePlan;

/// Updates for training on `n` clips every epoch: `ceil(n / b) * epochs`.
pub fn updates_noncl(n: usize, batch_size: usize, total_epochs: usize) -> u64 {
    assert!(batch_size >= 1, "batch size must be positive");
    (n.div_ceil(batch_size) * total_epochs) as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCost {
    pub size: usize,
    pub batches: usize,
    pub epochs: usize,
    pub updates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub batch_size: usize,
    pub n_train: usize,
    pub total_epochs: usize,
    pub updates_cl: u64,
    pub updates_noncl: u64,
    /// `1 - updates_cl / updates_noncl`.
    pub reduction: f64,
    pub stages: Vec<StageCost>,
}

/// Curriculum updates for `plan`, compared against full-set training with the
/// same batch size and total epochs.
pub fn updates_cl(plan: &StagePlan) -> CostReport {
    let sizes: Vec<usize> = plan.sizes();
    let epochs: Vec<usize> = plan.stages.iter().map(|s| s.epochs).collect();
    updates_for_sizes(&sizes, &epochs, plan.batch_size)
}

/// Cost of a plan given only its cumulative stage sizes and epochs.
pub fn updates_for_sizes(sizes: &[usize], epochs: &[usize], batch_size: usize) -> CostReport {
    assert_eq!(sizes.len(), epochs.len(), "one epoch count per stage");
    assert!(batch_size >= 1, "batch size must be positive");
    let stages: Vec<StageCost> = sizes
        .iter()
        .zip(epochs)
        .map(|(&size, &epochs)| {
            let batches = size.div_ceil(batch_size);
            StageCost {
                size,
                batches,
                epochs,
                updates: (batches * epochs) as u64,
            }
        })
        .collect();
    let total = stages.iter().map(|s| s.updates).sum();
    let n = sizes.last().copied().unwrap_or(0);
    let e_total = epochs.iter().sum();
    let base = updates_noncl(n, batch_size, e_total);
    CostReport {
        batch_size,
        n_train: n,
        total_epochs: e_total,
        updates_cl: total,
        updates_noncl: base,
        reduction: if base == 0 {
            0.0
        } else {
            1.0 - total as f64 / base as f64
        },
        stages,
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stage  |S_k|  batches  epochs  updates")?;
        for (k, s) in self.stages.iter().enumerate() {
            writeln!(
                f,
                "{:>5}  {:>5}  {:>7}  {:>6}  {:>7}",
                k + 1,
                s.size,
                s.batches,
                s.epochs,
                s.updates
            )?;
        }
        writeln!(f, "curriculum updates:     {}", self.updates_cl)?;
        writeln!(f, "non-curriculum updates: {}", self.updates_noncl)?;
        write!(f, "reduction:              {:.1}%", self.reduction * 100.0)
    }
}
