use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{mean, paired_t_one_sided, sample_std, SignificanceResult, TrialResult};
use crate::curriculum::Strategy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub trials: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_updates: f64,
    /// Paired test against the baseline; absent for the baseline itself or
    /// when no baseline was run.
    pub vs_baseline: Option<SignificanceResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub baseline: Option<Strategy>,
    pub rows: Vec<SummaryRow>,
}

/// Mean/std of final accuracy per strategy, with a paired one-sided t-test
/// (strategy > baseline) over trials matched by seed.
pub fn aggregate(trials: &[TrialResult], baseline: Strategy) -> Result<Summary> {
    let mut by_strategy: BTreeMap<Strategy, BTreeMap<u64, &TrialResult>> = BTreeMap::new();
    for t in trials {
        if by_strategy
            .entry(t.strategy)
            .or_default()
            .insert(t.seed, t)
            .is_some()
        {
            return Err(Error::Stats(format!(
                "duplicate trial for strategy {} seed {}",
                t.strategy, t.seed
            )));
        }
    }
    for (s, runs) in &by_strategy {
        if runs.len() < 2 {
            return Err(Error::Stats(format!(
                "strategy {s} has {} trial(s); at least 2 are needed",
                runs.len()
            )));
        }
    }

    let base = by_strategy.get(&baseline);
    let mut rows = Vec::new();
    for s in Strategy::ALL {
        let Some(runs) = by_strategy.get(&s) else {
            continue;
        };
        let acc: Vec<f64> = runs.values().map(|t| t.final_accuracy).collect();
        let upd: Vec<f64> = runs.values().map(|t| t.total_updates as f64).collect();
        let vs_baseline = match base {
            Some(base) if s != baseline => {
                if !runs.keys().eq(base.keys()) {
                    return Err(Error::Stats(format!(
                        "strategy {s} seeds {:?} do not match baseline seeds {:?}",
                        runs.keys().collect::<Vec<_>>(),
                        base.keys().collect::<Vec<_>>()
                    )));
                }
                let b: Vec<f64> = base.values().map(|t| t.final_accuracy).collect();
                Some(paired_t_one_sided(&acc, &b)?)
            }
            _ => None,
        };
        rows.push(SummaryRow {
            strategy: s,
            trials: acc.len(),
            mean_accuracy: mean(&acc),
            std_accuracy: sample_std(&acc),
            mean_updates: mean(&upd),
            vs_baseline,
        });
    }
    Ok(Summary {
        baseline: base.map(|_| baseline),
        rows,
    })
}

/// Trial-averaged accuracy at each evaluation point of one strategy, as
/// `(mean cumulative updates, mean accuracy)`.
pub fn mean_curve(trials: &[&TrialResult]) -> Result<Vec<(f64, f64)>> {
    let Some(first) = trials.first() else {
        return Ok(Vec::new());
    };
    let len = first.curve.len();
    if trials.iter().any(|t| t.curve.len() != len) {
        return Err(Error::Stats(
            "trials have different numbers of evaluation points".into(),
        ));
    }
    Ok((0..len)
        .map(|i| {
            let u: Vec<f64> = trials.iter().map(|t| t.curve[i].updates as f64).collect();
            let a: Vec<f64> = trials.iter().map(|t| t.curve[i].accuracy).collect();
            (mean(&u), mean(&a))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(strategy: Strategy, seed: u64, acc: f64) -> TrialResult {
        TrialResult {
            strategy,
            seed,
            stage_accuracies: vec![acc],
            stage_updates: vec![10],
            final_accuracy: acc,
            total_updates: 10,
            curve: vec![],
            epoch_losses: vec![],
        }
    }

    #[test]
    fn identical_strategies_are_not_significant() {
        let mut ts = Vec::new();
        for seed in 0..5 {
            let acc = 0.5 + seed as f64 * 0.01;
            ts.push(trial(Strategy::None, seed, acc));
            ts.push(trial(Strategy::Ipa1, seed, acc));
        }
        let s = aggregate(&ts, Strategy::None).unwrap();
        let ipa = s
            .rows
            .iter()
            .find(|r| r.strategy == Strategy::Ipa1)
            .unwrap();
        let sig = ipa.vs_baseline.unwrap();
        assert_eq!(sig.p_value, 0.5);
        assert!(!sig.significant);
    }

    #[test]
    fn consistent_gain_is_significant() {
        let mut ts = Vec::new();
        for seed in 0..10 {
            let base = 0.5 + (seed as f64 * 0.37).sin() * 0.03;
            let noise = (seed as f64 * 1.7).cos() * 0.003;
            ts.push(trial(Strategy::None, seed, base));
            ts.push(trial(Strategy::Ipa1, seed, base + 0.02 + noise));
        }
        let s = aggregate(&ts, Strategy::None).unwrap();
        let ipa = s
            .rows
            .iter()
            .find(|r| r.strategy == Strategy::Ipa1)
            .unwrap();
        assert!(ipa.vs_baseline.unwrap().significant);
        assert!(s.rows[0].vs_baseline.is_none());
    }

    #[test]
    fn single_strategy_has_no_tests() {
        let ts = vec![trial(Strategy::Ipa2, 1, 0.4), trial(Strategy::Ipa2, 2, 0.5)];
        let s = aggregate(&ts, Strategy::None).unwrap();
        assert_eq!(s.baseline, None);
        assert_eq!(s.rows.len(), 1);
        assert!(s.rows[0].vs_baseline.is_none());
        assert!((s.rows[0].mean_accuracy - 0.45).abs() < 1e-12);
    }

    #[test]
    fn unmatched_seeds_are_rejected() {
        let ts = vec![
            trial(Strategy::None, 1, 0.4),
            trial(Strategy::None, 2, 0.5),
            trial(Strategy::Ipa1, 1, 0.4),
            trial(Strategy::Ipa1, 3, 0.5),
        ];
        assert!(aggregate(&ts, Strategy::None).is_err());
        assert!(aggregate(&ts[..1], Strategy::None).is_err());
    }
}
