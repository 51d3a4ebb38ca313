//! Staged training: the model persists across stages while the learning-rate
//! schedule restarts at the start of every stage.

mod adam;
mod gradcheck;
mod model;
mod schedule;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::{Dataset, Split};
use crate::curriculum::StagePlan;
use crate::error::{Error, Result};
use crate::stats::{macro_accuracy, EvalPoint, TrialResult};

pub use adam::{adam_step, AdamParams, AdamState};
pub use gradcheck::{gradient_check, GradCheck, GradCheckOptions};
pub use model::{pool_mean_std, Example, Model, ModelConfig, ReferenceModel};
pub use schedule::{cosine_lr, CosineSchedule, LR_MAX, LR_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs_per_stage: [usize; 4],
    pub seed: u64,
    pub shuffle: bool,
    pub model: ModelConfig,
    pub schedule: CosineSchedule,
    pub adam: AdamParams,
    /// Also evaluate every this many epochs, in addition to stage ends.
    pub eval_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            epochs_per_stage: [50; 4],
            seed: 0,
            shuffle: true,
            model: ModelConfig::default(),
            schedule: CosineSchedule::default(),
            adam: AdamParams::default(),
            eval_every: None,
        }
    }
}

impl TrainConfig {
    pub fn total_epochs(&self) -> usize {
        self.epochs_per_stage.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.epochs_per_stage.contains(&0) {
            return Err(Error::config("epochs_per_stage entries must be >= 1"));
        }
        let s = &self.schedule;
        if !(s.eta_max > 0.0 && s.eta_min > 0.0 && s.eta_min <= s.eta_max) {
            return Err(Error::config(
                "learning rates must satisfy 0 < eta_min <= eta_max",
            ));
        }
        let ModelConfig::Reference { hidden } = self.model;
        if hidden == 0 {
            return Err(Error::config("hidden width must be >= 1"));
        }
        if self.eval_every == Some(0) {
            return Err(Error::config("eval_every must be >= 1"));
        }
        Ok(())
    }
}

/// Per-epoch record of one stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageLog {
    pub losses: Vec<f64>,
    pub updates: Vec<u64>,
    pub lrs: Vec<f64>,
}

impl StageLog {
    pub fn total_updates(&self) -> u64 {
        self.updates.iter().sum()
    }
}

/// Mutable optimisation state threaded through consecutive stages.
pub struct Learner {
    pub model: Box<dyn Model>,
    pub adam: AdamState,
    rng: ChaCha8Rng,
}

impl Learner {
    pub fn new(model: Box<dyn Model>, adam: AdamParams, shuffle_seed: u64) -> Self {
        let n = model.n_params();
        Learner {
            model,
            adam: AdamState::new(n, adam),
            rng: ChaCha8Rng::seed_from_u64(shuffle_seed),
        }
    }
}

/// Trains `epochs` epochs on `examples`, one Adam step per batch (the last
/// partial batch is kept). `after_epoch` sees the model after each epoch
/// together with the epoch index within the stage.
pub fn train_stage(
    learner: &mut Learner,
    examples: &[Example<'_>],
    epochs: usize,
    config: &TrainConfig,
    mut after_epoch: impl FnMut(&dyn Model, usize),
) -> Result<StageLog> {
    if examples.is_empty() {
        return Err(Error::Training("stage has no clips".into()));
    }
    if epochs == 0 || config.batch_size == 0 {
        return Err(Error::config("epochs and batch size must be >= 1"));
    }

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = StageLog::default();
    let mut batch: Vec<Example<'_>> = Vec::with_capacity(config.batch_size);
    for epoch in 0..epochs {
        if config.shuffle {
            order.shuffle(&mut learner.rng);
        }
        let lr = config.schedule.stage_lr(epoch, epochs);
        let mut loss_sum = 0.0;
        let mut updates = 0u64;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| examples[i]));
            let (loss, grads) = learner.model.loss_and_gradients(&batch);
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            adam_step(learner.model.params_mut(), &grads, &mut learner.adam, lr)?;
            loss_sum += loss * chunk.len() as f64;
            updates += 1;
        }
        log.losses.push(loss_sum / examples.len() as f64);
        log.updates.push(updates);
        log.lrs.push(lr);
        after_epoch(learner.model.as_ref(), epoch);
    }
    Ok(log)
}

fn examples_for<'a>(dataset: &'a Dataset, ids: &[String]) -> Result<Vec<Example<'a>>> {
    ids.iter()
        .map(|id| {
            let clip = dataset
                .clip(id)
                .ok_or_else(|| Error::integrity(format!("unknown clip {id}")))?;
            let features = dataset
                .feature(id)
                .ok_or_else(|| Error::integrity(format!("clip {id} has no features")))?;
            Ok(Example::new(features, clip.intended))
        })
        .collect()
}

/// Test-set macro accuracy of `model`.
pub fn evaluate(model: &dyn Model, test: &[Example<'_>]) -> Result<f64> {
    let preds: Vec<_> = test.iter().map(|e| model.predict(e.features)).collect();
    let labels: Vec<_> = test.iter().map(|e| e.label).collect();
    macro_accuracy(&preds, &labels)
}

/// Runs every stage of `plan` in order on one freshly initialised model and
/// evaluates on the test split after each stage (and every `eval_every`
/// epochs when configured).
pub fn run_experiment(
    dataset: &Dataset,
    split: &Split,
    plan: &StagePlan,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrialResult> {
    config.validate()?;
    if plan.batch_size != config.batch_size {
        return Err(Error::config(format!(
            "plan batch size {} differs from trainer batch size {}",
            plan.batch_size, config.batch_size
        )));
    }
    let input_dim = dataset
        .feature_dim()
        .ok_or_else(|| Error::integrity("dataset has no features"))?;
    let train = examples_for(dataset, &split.train)?;
    let test = examples_for(dataset, &split.test)?;
    if test.is_empty() {
        return Err(Error::Training("test split is empty".into()));
    }

    let mut model = config.model.build(seed, input_dim);
    let train_feats: Vec<_> = train.iter().map(|e| e.features).collect();
    model.prepare(&train_feats);
    let mut learner = Learner::new(model, config.adam, seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut result = TrialResult {
        strategy: plan.strategy,
        seed,
        stage_accuracies: Vec::new(),
        stage_updates: Vec::new(),
        final_accuracy: 0.0,
        total_updates: 0,
        curve: Vec::new(),
        epoch_losses: Vec::new(),
    };

    let mut epochs_done = 0usize;
    let mut updates_done = 0u64;
    for stage in &plan.stages {
        let examples = examples_for(dataset, &stage.clips)?;
        let per_epoch = stage.clips.len().div_ceil(config.batch_size) as u64;
        let mut eval_error = None;
        let log = train_stage(
            &mut learner,
            &examples,
            stage.epochs,
            config,
            |model, epoch| {
                let global = epochs_done + epoch + 1;
                let last = epoch + 1 == stage.epochs;
                let due = config.eval_every.is_some_and(|k| global.is_multiple_of(k));
                if !(due || last) || eval_error.is_some() {
                    return;
                }
                match evaluate(model, &test) {
                    Ok(accuracy) => result.curve.push(EvalPoint {
                        stage: stage.index,
                        epoch: global,
                        updates: updates_done + per_epoch * (epoch as u64 + 1),
                        accuracy,
                    }),
                    Err(e) => eval_error = Some(e),
                }
            },
        )?;
        if let Some(e) = eval_error {
            return Err(e);
        }
        epochs_done += stage.epochs;
        updates_done += log.total_updates();
        result.epoch_losses.extend(log.losses);
        let last = result.curve.last().expect("stage end is always evaluated");
        debug_assert_eq!(last.updates, updates_done);
        result.stage_accuracies.push(last.accuracy);
        result.stage_updates.push(updates_done);
    }
    result.total_updates = updates_done;
    result.final_accuracy = *result.stage_accuracies.last().unwrap_or(&0.0);
    Ok(result)
}

/// Independent trials, one per seed, run in parallel. `plan_for` builds the
/// plan for a seed (only the random curriculum depends on it). Results are in
/// `seeds` order.
pub fn run_trials<F>(
    dataset: &Dataset,
    split: &Split,
    config: &TrainConfig,
    seeds: &[u64],
    plan_for: F,
) -> Result<Vec<TrialResult>>
where
    F: Fn(u64) -> Result<StagePlan> + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| run_experiment(dataset, split, &plan_for(seed)?, config, seed))
        .collect()
}
