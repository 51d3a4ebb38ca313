use std::collections::HashSet;

use percept_core::annotation::{
    split_train_test, synth_generate, AmbiguityProfile, Split, SynthConfig,
};
use percept_core::curriculum::{build_stages, no_curriculum, StagePlan};
use percept_core::difficulty::{classify_clips, RuleParams};
use percept_core::pipeline::{build_manifest, DifficultyFile};
use percept_core::stats::macro_accuracy;
use percept_core::trainer::{
    adam_step, gradient_check, pool_mean_std, run_experiment, train_stage, AdamParams, AdamState,
    Example, GradCheckOptions, Learner, Model, ModelConfig, ReferenceModel, TrainConfig, LR_MAX,
    LR_MIN,
};
use percept_core::{
    updates_cl, updates_noncl, Dataset, Emotion, FeatureSequence, Modality, Strategy,
};

fn dataset(n: usize, profile: AmbiguityProfile, dim: usize, separation: f64, seed: u64) -> Dataset {
    let cfg = SynthConfig {
        n_clips: n,
        // At least ten clips per (actor, emotion) group so every group has test clips.
        n_actors: (n / 60).max(1),
        profile,
        feature_dim: dim,
        frames_min: 8,
        frames_max: 16,
        class_separation: separation,
        noise_floor: 0.3,
        noise_scale: 2.0,
        ..SynthConfig::default()
    };
    synth_generate(&cfg, seed).unwrap()
}

fn examples<'a>(ds: &'a Dataset, ids: &[String]) -> Vec<Example<'a>> {
    ids.iter()
        .map(|id| Example::new(ds.feature(id).unwrap(), ds.clip(id).unwrap().intended))
        .collect()
}

fn categories(ds: &Dataset) -> DifficultyFile {
    let ids: Vec<&str> = ds.clip_ids().collect();
    DifficultyFile::Categories(
        classify_clips(ds, ids, Modality::Audio, &RuleParams::default()).unwrap(),
    )
}

/// Clear-match clips of the train split: the Easy bin of every rule curriculum.
fn easy_bin(ds: &Dataset, split: &Split) -> Vec<String> {
    build_manifest(Strategy::Ipa1, &split.train, Some(&categories(ds)), None)
        .unwrap()
        .bins
        .easy
}

fn random_sequence(id: &str, frames: usize, dim: usize, seed: u64) -> FeatureSequence {
    let data: Vec<f64> = (0..frames * dim)
        .map(|i| ((i as f64 + 1.0) * 0.7 + seed as f64 * 1.3).sin() * 2.0)
        .collect();
    FeatureSequence::new(id, frames, dim, data).unwrap()
}

#[test]
fn gradient_check_on_random_batch() {
    let seqs: Vec<FeatureSequence> = (0..8)
        .map(|i| random_sequence(&format!("s{i}"), 3 + i, 5, i as u64))
        .collect();
    let batch: Vec<Example> = seqs
        .iter()
        .enumerate()
        .map(|(i, s)| Example::new(s, Emotion::from_index(i % 6).unwrap()))
        .collect();

    // Small enough that every coordinate is probed.
    let mut small = ReferenceModel::with_hidden(3, 5, 6, 12);
    let check = gradient_check(&mut small, &batch, GradCheckOptions::default());
    assert_eq!(check.checked, small.n_params());
    assert!(check.checked >= 200);
    assert!(check.passes(1e-4), "{check:?}");

    let mut full = ReferenceModel::init(9, 5, 6);
    let refs: Vec<&FeatureSequence> = seqs.iter().collect();
    full.prepare(&refs);
    let check = gradient_check(&mut full, &batch, GradCheckOptions::default());
    assert_eq!(check.checked, 256);
    assert!(check.passes(1e-4), "{check:?}");
}

#[test]
fn zero_input_gradient_is_the_softmax_residual() {
    let zero = FeatureSequence::new("z", 4, 3, vec![0.0; 12]).unwrap();
    let batch = vec![Example::new(&zero, Emotion::Anger); 5];
    let mut model = ReferenceModel::with_hidden(4, 3, 6, 10);
    // Keep every hidden unit away from the ReLU kink (b1 starts at zero).
    for b in &mut model.params_mut()[60..70] {
        *b = 0.1;
    }
    let probs = model.forward(&zero);
    let (_, grad) = model.loss_and_gradients(&batch);

    let n = model.n_params();
    let b2 = &grad[n - 6..];
    for c in 0..6 {
        let expected = probs[c] - if c == 0 { 1.0 } else { 0.0 };
        assert!((b2[c] - expected).abs() < 1e-12, "class {c}");
    }
    // Zero inputs leave the first layer's weights without gradient.
    assert!(grad[..10 * 6].iter().all(|&g| g == 0.0));

    let mut m = model.clone();
    assert!(gradient_check(&mut m, &batch, GradCheckOptions::default()).passes(1e-4));

    let weightless: Vec<Example> = batch
        .iter()
        .map(|e| Example { weight: 0.0, ..*e })
        .collect();
    let (loss, grad) = model.loss_and_gradients(&weightless);
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|&g| g == 0.0));
}

/// Reports a wrong gradient on one coordinate.
struct Corrupted(ReferenceModel);

impl Model for Corrupted {
    fn init(seed: u64, input_dim: usize, n_classes: usize) -> Self {
        Corrupted(ReferenceModel::with_hidden(seed, input_dim, n_classes, 12))
    }
    fn params(&self) -> &[f64] {
        self.0.params()
    }
    fn params_mut(&mut self) -> &mut [f64] {
        self.0.params_mut()
    }
    fn forward(&self, features: &FeatureSequence) -> Vec<f64> {
        self.0.forward(features)
    }
    fn loss_and_gradients(&self, batch: &[Example<'_>]) -> (f64, Vec<f64>) {
        let (loss, mut grad) = self.0.loss_and_gradients(batch);
        grad[7] += 1e-2;
        (loss, grad)
    }
}

#[test]
fn corrupted_gradient_fails_the_check() {
    let seqs: Vec<FeatureSequence> = (0..4)
        .map(|i| random_sequence(&format!("s{i}"), 2, 5, i))
        .collect();
    let batch: Vec<Example> = seqs
        .iter()
        .map(|s| Example::new(s, Emotion::Fear))
        .collect();
    let mut m = Corrupted::init(1, 5, 6);
    let check = gradient_check(&mut m, &batch, GradCheckOptions::default());
    assert!(!check.passes(1e-4));
    assert_eq!(check.worst_coord, 7);
}

#[test]
fn adam_examples() {
    let hp = AdamParams::default();
    let mut p = vec![0.3, -1.0];
    let mut s = AdamState::new(2, hp);
    adam_step(&mut p, &[0.0, 0.0], &mut s, 1e-3).unwrap();
    assert_eq!(p, [0.3, -1.0]);

    let mut p = vec![0.0];
    let mut s = AdamState::new(1, hp);
    adam_step(&mut p, &[1.0], &mut s, 1e-3).unwrap();
    assert!((p[0] + 1e-3).abs() < 1e-6);
    let before = p[0];
    adam_step(&mut p, &[-1.0], &mut s, 1e-3).unwrap();
    assert!((p[0] - before).abs() < 1e-3);
    assert_eq!(s.t, 2);
    assert!(s.v.iter().all(|&v| v >= 0.0));
    assert!(adam_step(&mut p, &[1.0, 2.0], &mut s, 1e-3).is_err());
}

/// Closed-form linear classifier: least squares on one-hot targets over
/// pooled features plus a bias, solved through the normal equations.
fn least_squares_accuracy(exs: &[Example]) -> f64 {
    let rows: Vec<Vec<f64>> = exs
        .iter()
        .map(|e| {
            let mut x = pool_mean_std(e.features);
            x.push(1.0);
            x
        })
        .collect();
    let d = rows[0].len();
    // Augmented system [X^T X | X^T Y].
    let mut a = vec![vec![0.0; d + 6]; d];
    for (x, e) in rows.iter().zip(exs) {
        for i in 0..d {
            for j in 0..d {
                a[i][j] += x[i] * x[j];
            }
            a[i][d + e.label.index()] += x[i];
        }
    }
    for i in 0..d {
        let pivot = (i..d)
            .max_by(|&p, &q| a[p][i].abs().total_cmp(&a[q][i].abs()))
            .unwrap();
        a.swap(i, pivot);
        let lead = a[i][i];
        assert!(lead.abs() > 1e-12, "singular normal equations");
        for v in a[i].iter_mut() {
            *v /= lead;
        }
        for r in 0..d {
            if r != i {
                let f = a[r][i];
                let row_i = a[i].clone();
                for (v, w) in a[r].iter_mut().zip(&row_i) {
                    *v -= f * w;
                }
            }
        }
    }
    let preds: Vec<Emotion> = rows
        .iter()
        .map(|x| {
            let score = |c: usize| (0..d).map(|i| x[i] * a[i][d + c]).sum::<f64>();
            let best = (0..6)
                .max_by(|&p, &q| score(p).total_cmp(&score(q)))
                .unwrap();
            Emotion::from_index(best).unwrap()
        })
        .collect();
    let labels: Vec<Emotion> = exs.iter().map(|e| e.label).collect();
    macro_accuracy(&preds, &labels).unwrap()
}

#[test]
fn separable_easy_bin_is_learned() {
    let ds = dataset(1200, AmbiguityProfile::Table2Shaped, 8, 5.0, 17);
    let split = split_train_test(&ds, 0.8, 1).unwrap();
    let easy = easy_bin(&ds, &split);
    let exs = examples(&ds, &easy);
    assert_eq!(
        least_squares_accuracy(&exs),
        1.0,
        "oracle: the Easy bin must be linearly separable"
    );

    let config = TrainConfig::default();
    let mut model = config.model.build(5, 8);
    let feats: Vec<&FeatureSequence> = exs.iter().map(|e| e.features).collect();
    model.prepare(&feats);
    let mut learner = Learner::new(model, config.adam, 5);
    train_stage(&mut learner, &exs, 50, &config, |_, _| {}).unwrap();
    let preds: Vec<Emotion> = exs
        .iter()
        .map(|e| learner.model.predict(e.features))
        .collect();
    let labels: Vec<Emotion> = exs.iter().map(|e| e.label).collect();
    let acc = macro_accuracy(&preds, &labels).unwrap();
    assert!(acc >= 0.95, "train macro accuracy {acc}");
}

#[test]
fn easy_stage_loss_keeps_falling() {
    let ds = dataset(600, AmbiguityProfile::Table2Shaped, 16, 2.0, 42);
    let split = split_train_test(&ds, 0.8, 7).unwrap();
    let exs = examples(&ds, &easy_bin(&ds, &split));
    let config = TrainConfig::default();
    let mut model = config.model.build(1, 16);
    let train: Vec<&FeatureSequence> = examples(&ds, &split.train)
        .iter()
        .map(|e| e.features)
        .collect();
    model.prepare(&train);
    let mut learner = Learner::new(model, config.adam, 1);
    let log = train_stage(&mut learner, &exs, 50, &config, |_, _| {}).unwrap();

    let smoothed: Vec<f64> = log
        .losses
        .windows(5)
        .map(|w| w.iter().sum::<f64>() / 5.0)
        .collect();
    // smoothed[k] averages epochs k..k+5, so index 5 onwards starts after epoch 5.
    for (k, w) in smoothed.windows(2).enumerate().skip(5) {
        assert!(
            w[1] <= w[0],
            "smoothed loss rose at window {k}: {} -> {}",
            w[0],
            w[1]
        );
    }
}

#[test]
fn stage_learning_rates_hit_both_endpoints() {
    let ds = dataset(120, AmbiguityProfile::AllClearMatch, 4, 1.0, 3);
    let ids: Vec<String> = ds.clip_ids().map(str::to_owned).collect();
    let exs = examples(&ds, &ids);
    let config = TrainConfig {
        batch_size: 32,
        ..TrainConfig::default()
    };
    let mut learner = Learner::new(config.model.build(0, 4), config.adam, 0);
    for epochs in [2, 3, 7, 50] {
        let log = train_stage(&mut learner, &exs, epochs, &config, |_, _| {}).unwrap();
        assert_eq!(log.lrs[0], LR_MAX);
        assert!((log.lrs[epochs - 1] - LR_MIN).abs() <= 1e-12);
        assert!(log.lrs.windows(2).all(|w| w[1] < w[0]));
        assert!(log.updates.iter().all(|&u| u == 4));
    }
    let log = train_stage(&mut learner, &exs, 1, &config, |_, _| {}).unwrap();
    assert_eq!(log.lrs, [LR_MAX]);
}

#[test]
fn update_counts_use_the_ceiling() {
    let ds = dataset(100, AmbiguityProfile::AllClearMatch, 2, 1.0, 3);
    let ids: Vec<String> = ds.clip_ids().map(str::to_owned).collect();
    let config = TrainConfig {
        batch_size: 32,
        ..TrainConfig::default()
    };
    let mut learner = Learner::new(config.model.build(0, 2), config.adam, 0);
    let log = train_stage(&mut learner, &examples(&ds, &ids), 1, &config, |_, _| {}).unwrap();
    assert_eq!(log.updates, [4]);
    assert!(train_stage(&mut learner, &[], 1, &config, |_, _| {}).is_err());
}

fn plan(
    ds: &Dataset,
    split: &Split,
    strategy: Strategy,
    config: &TrainConfig,
    seed: u64,
) -> StagePlan {
    let ids: Vec<&str> = ds.clip_ids().collect();
    let diff = match strategy {
        Strategy::IntendedScore | Strategy::EntropyScore => Some(DifficultyFile::Scores(
            percept_core::difficulty::score_clips(
                ds,
                ids,
                strategy.score_method().unwrap(),
                Modality::Audio,
            )
            .unwrap(),
        )),
        Strategy::Ipa1 | Strategy::Ipa2 | Strategy::Ipa3 => Some(categories(ds)),
        _ => None,
    };
    let m = build_manifest(strategy, &split.train, diff.as_ref(), Some(seed)).unwrap();
    build_stages(&m, &config.epochs_per_stage, config.batch_size).unwrap()
}

#[test]
fn trainer_counts_match_the_cost_model() {
    let ds = dataset(240, AmbiguityProfile::Table2Shaped, 4, 1.0, 8);
    let split = split_train_test(&ds, 0.8, 2).unwrap();
    let config = TrainConfig {
        batch_size: 16,
        epochs_per_stage: [3, 2, 4, 1],
        ..TrainConfig::default()
    };
    for strategy in Strategy::ALL {
        let p = plan(&ds, &split, strategy, &config, 4);
        let r = run_experiment(&ds, &split, &p, &config, 4).unwrap();
        assert_eq!(r.total_updates, updates_cl(&p).updates_cl, "{strategy}");
        if strategy == Strategy::None {
            assert_eq!(r.total_updates, updates_noncl(split.train.len(), 16, 10));
            assert_eq!(r.stage_accuracies.len(), 1);
        } else {
            assert_eq!(r.stage_accuracies.len(), 4);
        }
        assert!(r.stage_updates.windows(2).all(|w| w[0] < w[1]));
        assert!(r.stage_accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
    }
}

#[test]
fn experiments_are_deterministic() {
    let ds = dataset(150, AmbiguityProfile::Table2Shaped, 4, 1.0, 2);
    let split = split_train_test(&ds, 0.8, 2).unwrap();
    let config = TrainConfig {
        batch_size: 16,
        epochs_per_stage: [2; 4],
        eval_every: Some(3),
        ..TrainConfig::default()
    };
    let p = plan(&ds, &split, Strategy::Ipa3, &config, 0);
    let a = run_experiment(&ds, &split, &p, &config, 11).unwrap();
    let b = run_experiment(&ds, &split, &p, &config, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.epoch_losses.len(), 8);
    let c = run_experiment(&ds, &split, &p, &config, 12).unwrap();
    assert_ne!(a.epoch_losses, c.epoch_losses);

    let exs = examples(&ds, &split.train);
    let run = || {
        let mut l = Learner::new(config.model.build(3, 4), config.adam, 3);
        train_stage(&mut l, &exs, 3, &config, |_, _| {}).unwrap();
        l.model.params().to_vec()
    };
    let (x, y) = (run(), run());
    assert!(x.iter().zip(&y).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn mismatched_batch_size_is_rejected() {
    let ds = dataset(60, AmbiguityProfile::AllClearMatch, 2, 1.0, 2);
    let split = split_train_test(&ds, 0.8, 2).unwrap();
    let p = build_stages(&no_curriculum(&split.train), &[1; 4], 8).unwrap();
    let config = TrainConfig::default();
    assert!(run_experiment(&ds, &split, &p, &config, 0).is_err());
    let seen: HashSet<usize> = [ModelConfig::default()]
        .iter()
        .map(|m| m.build(0, 2).n_params())
        .collect();
    assert_eq!(seen.len(), 1);
}
