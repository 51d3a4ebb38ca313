//! Evaluation metrics, trial aggregation and significance testing.

mod aggregate;
pub mod report;
mod ttest;

use serde::{Deserialize, Serialize};

use crate::annotation::Emotion;
use crate::curriculum::Strategy;
use crate::error::{Error, Result};

pub use aggregate::{aggregate, mean_curve, Summary, SummaryRow};
pub use ttest::{
    ln_gamma, paired_t_one_sided, regularized_incomplete_beta, student_t_cdf, SignificanceResult,
};

/// Test accuracy after some number of cumulative gradient updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub stage: usize,
    /// Epochs completed so far, over all stages.
    pub epoch: usize,
    pub updates: u64,
    pub accuracy: f64,
}

/// Outcome of one seeded training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub strategy: Strategy,
    pub seed: u64,
    /// Test macro accuracy at the end of each stage.
    pub stage_accuracies: Vec<f64>,
    /// Cumulative updates at the end of each stage.
    pub stage_updates: Vec<u64>,
    pub final_accuracy: f64,
    pub total_updates: u64,
    /// Every evaluation made during training, in order.
    pub curve: Vec<EvalPoint>,
    /// Mean training loss per epoch, over all stages.
    pub epoch_losses: Vec<f64>,
}

impl TrialResult {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Unweighted mean of per-class recall over the classes present in `labels`.
pub fn macro_accuracy(predictions: &[Emotion], labels: &[Emotion]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            actual: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Stats("macro accuracy of an empty sample".into()));
    }
    let mut hits = [0usize; Emotion::COUNT];
    let mut support = [0usize; Emotion::COUNT];
    for (&p, &y) in predictions.iter().zip(labels) {
        support[y.index()] += 1;
        if p == y {
            hits[y.index()] += 1;
        }
    }
    let recalls: Vec<f64> = support
        .iter()
        .zip(hits)
        .filter(|(&s, _)| s > 0)
        .map(|(&s, h)| h as f64 / s as f64)
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Emotion::*;

    #[test]
    fn perfect_predictions() {
        let y = [Anger, Sad, Fear];
        assert_eq!(macro_accuracy(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn two_class_recalls_average() {
        // Anger recall 3/4, Sad recall 1/2.
        let labels = [Anger, Anger, Anger, Anger, Sad, Sad];
        let preds = [Anger, Anger, Anger, Sad, Sad, Anger];
        assert!((macro_accuracy(&preds, &labels).unwrap() - 0.625).abs() < 1e-12);
    }

    #[test]
    fn constant_prediction_on_balanced_labels() {
        let labels: Vec<Emotion> = Emotion::ALL.iter().flat_map(|&e| [e, e]).collect();
        let preds = vec![Happy; labels.len()];
        assert!((macro_accuracy(&preds, &labels).unwrap() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(macro_accuracy(&[], &[]).is_err());
        assert!(macro_accuracy(&[Anger], &[]).is_err());
    }

    #[test]
    fn std_uses_sample_denominator() {
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - 1.2909944487358056).abs() < 1e-12);
        assert_eq!(sample_std(&[5.0]), 0.0);
    }
}
