use std::f64::consts::LN_2;

use percept_core::annotation::{synth_generate, AmbiguityProfile, Clip, Dataset, SynthConfig};
use percept_core::difficulty::{
    agreement_table, category_counts, classify_rule, score_entropy, score_intended,
    DifficultyCategory, RuleParams,
};
use percept_core::{Emotion, Modality, VoteRecord};
use proptest::prelude::*;

const LN6: f64 = 1.791_759_469_228_055;

fn record(counts: [u32; 6]) -> VoteRecord {
    VoteRecord::new("c", Modality::Audio, counts).unwrap()
}

fn counts() -> impl Strategy<Value = [u32; 6]> {
    prop::array::uniform6(0u32..=12).prop_filter("at least one vote", |c| c.iter().sum::<u32>() > 0)
}

fn emotion() -> impl Strategy<Value = Emotion> {
    (0usize..6).prop_map(|i| Emotion::from_index(i).unwrap())
}

/// Straight transcription of the rule, kept independent of the library code.
fn rule_oracle(c: &[u32; 6], intended: usize) -> DifficultyCategory {
    let n: u32 = c.iter().sum();
    let max = *c.iter().max().unwrap();
    let winners: Vec<usize> = (0..6).filter(|&i| c[i] == max).collect();
    if winners.len() == 1 && 2 * max > n {
        if winners[0] == intended {
            DifficultyCategory::ClearMatch
        } else {
            DifficultyCategory::ClearMismatch
        }
    } else if c[intended] >= 2 {
        DifficultyCategory::AmbiguousMatch
    } else {
        DifficultyCategory::AmbiguousMismatch
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn entropy_zero_iff_point_mass(c in counts()) {
        let h = score_entropy(&record(c)).value;
        let support = c.iter().filter(|&&x| x > 0).count();
        prop_assert!(h >= 0.0);
        prop_assert_eq!(h.abs() < 1e-12, support == 1);
    }

    #[test]
    fn entropy_max_iff_uniform(c in counts()) {
        let h = score_entropy(&record(c)).value;
        prop_assert!(h <= LN6 + 1e-12);
        let uniform = c.iter().all(|&x| x == c[0]);
        prop_assert_eq!((h - LN6).abs() < 1e-9, uniform);
    }

    #[test]
    fn uniform_votes_reach_ln6(k in 1u32..=50) {
        let h = score_entropy(&record([k; 6])).value;
        prop_assert!((h - LN6).abs() < 1e-9);
    }

    #[test]
    fn entropy_matches_brute_force_in_bits(c in counts()) {
        let n: u32 = c.iter().sum();
        let bits: f64 = c
            .iter()
            .filter(|&&x| x > 0)
            .map(|&x| {
                let p = f64::from(x) / f64::from(n);
                -p * p.log2()
            })
            .sum();
        prop_assert!((score_entropy(&record(c)).value - bits * LN_2).abs() < 1e-12);
    }

    #[test]
    fn merging_categories_never_raises_entropy(c in counts(), i in 0usize..6, j in 0usize..6) {
        prop_assume!(i != j);
        let mut merged = c;
        merged[i] += merged[j];
        merged[j] = 0;
        let before = score_entropy(&record(c)).value;
        let after = score_entropy(&record(merged)).value;
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn intended_score_is_scale_invariant(c in counts(), e in emotion(), k in 1u32..=40) {
        let base = score_intended(&record(c), e).value;
        let scaled = score_intended(&record(c.map(|x| x * k)), e).value;
        prop_assert_eq!(base, scaled);
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert_eq!(base, f64::from(c[e.index()]) / f64::from(c.iter().sum::<u32>()));
    }

    #[test]
    fn classifier_is_total_deterministic_and_matches_rule(c in counts(), e in emotion()) {
        let p = RuleParams::default();
        let v = record(c);
        let first = classify_rule(&v, e, &p);
        prop_assert_eq!(first, classify_rule(&v, e, &p));
        prop_assert_eq!(first, rule_oracle(&c, e.index()));
    }

    #[test]
    fn relabeling_other_emotions_keeps_category(c in counts(), e in emotion(), perm in Just((0usize..6).collect::<Vec<_>>()).prop_shuffle()) {
        // Permute only the non-intended slots.
        let others: Vec<usize> = (0..6).filter(|&i| i != e.index()).collect();
        let targets: Vec<usize> = perm.into_iter().filter(|&i| i != e.index()).collect();
        let mut permuted = c;
        for (&from, &to) in others.iter().zip(&targets) {
            permuted[to] = c[from];
        }
        let p = RuleParams::default();
        prop_assert_eq!(classify_rule(&record(c), e, &p), classify_rule(&record(permuted), e, &p));
    }

    #[test]
    fn category_implications(c in counts(), e in emotion()) {
        let v = record(c);
        match classify_rule(&v, e, &RuleParams::default()) {
            DifficultyCategory::ClearMatch => prop_assert!(score_intended(&v, e).value > 0.5),
            DifficultyCategory::AmbiguousMismatch => prop_assert!(c[e.index()] <= 1),
            DifficultyCategory::AmbiguousMatch => prop_assert!(c[e.index()] >= 2),
            DifficultyCategory::ClearMismatch => prop_assert!(score_intended(&v, e).value < 0.5),
        }
    }
}

fn dataset_from(rows: &[(Emotion, [u32; 6])]) -> Dataset {
    let clips = rows
        .iter()
        .enumerate()
        .map(|(i, &(e, _))| Clip {
            clip_id: format!("c{i:03}"),
            actor_id: "a".into(),
            sentence_id: "s".into(),
            intended: e,
        })
        .collect();
    let votes = rows
        .iter()
        .enumerate()
        .map(|(i, &(_, c))| VoteRecord::new(format!("c{i:03}"), Modality::Audio, c).unwrap())
        .collect();
    Dataset::new(clips, votes, Vec::new()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn overall_agreement_is_rating_weighted_mean(rows in prop::collection::vec((emotion(), counts()), 1..30)) {
        let ds = dataset_from(&rows);
        let table = agreement_table(&ds);
        let audio = &table.rows[&Modality::Audio];
        let total: u64 = audio.ratings.values().sum();
        let weighted: f64 = audio
            .per_emotion
            .iter()
            .map(|(e, r)| r * audio.ratings[e] as f64)
            .sum::<f64>() / total as f64;
        prop_assert!((weighted - audio.all).abs() < 1e-12);
        prop_assert!(audio.per_emotion.values().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn category_counts_partition_the_dataset(rows in prop::collection::vec((emotion(), counts()), 1..40)) {
        let ds = dataset_from(&rows);
        let counts = category_counts(&ds, Modality::Audio, &RuleParams::default()).unwrap();
        prop_assert_eq!(counts.iter().sum::<usize>(), rows.len());
    }
}

#[test]
fn pooled_agreement_example() {
    let mut a = [0u32; 6];
    a[Emotion::Anger.index()] = 4;
    a[Emotion::Sad.index()] = 6;
    let mut b = [0u32; 6];
    b[Emotion::Anger.index()] = 6;
    b[Emotion::Neutral.index()] = 4;
    let ds = dataset_from(&[(Emotion::Anger, a), (Emotion::Anger, b)]);
    let row = &agreement_table(&ds).rows[&Modality::Audio];
    assert_eq!(row.per_emotion[&Emotion::Anger], 0.5);
    assert_eq!(row.all, 0.5);
}

#[test]
fn missing_vote_record_names_the_clip() {
    let ds = dataset_from(&[(Emotion::Happy, [0, 0, 0, 5, 0, 0])]);
    let err = category_counts(&ds, Modality::Video, &RuleParams::default()).unwrap_err();
    assert!(err.to_string().contains("c000"), "{err}");
}

#[test]
fn generator_profiles_classify_as_constructed() {
    let base = SynthConfig {
        n_clips: 300,
        feature_dim: 2,
        frames_min: 1,
        frames_max: 2,
        ..SynthConfig::default()
    };
    let clear = synth_generate(
        &SynthConfig {
            profile: AmbiguityProfile::AllClearMatch,
            ..base.clone()
        },
        5,
    )
    .unwrap();
    assert_eq!(
        category_counts(&clear, Modality::Audio, &RuleParams::default()).unwrap(),
        [300, 0, 0, 0]
    );
    let table = agreement_table(&clear);
    assert!(table.rows[&Modality::Audio]
        .per_emotion
        .values()
        .all(|&r| r == 1.0));

    let uniform = synth_generate(
        &SynthConfig {
            profile: AmbiguityProfile::Uniform,
            ..base
        },
        5,
    )
    .unwrap();
    for v in uniform.votes() {
        assert!((score_entropy(v).value - LN6).abs() < 1e-9);
    }
}
