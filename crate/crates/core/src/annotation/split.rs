use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Emotion};
use crate::error::{Error, Result};

/// Train/test partition of clip ids, each list in dataset order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn train_set(&self) -> HashSet<String> {
        self.train.iter().cloned().collect()
    }

    pub fn test_set(&self) -> HashSet<String> {
        self.test.iter().cloned().collect()
    }
}

/// Number of train clips for a group of `size`: `ceil(fraction * size)`.
pub(crate) fn train_count(fraction: f64, size: usize) -> usize {
    // Absorb representation error such as 0.7 * 10 = 7.000000000000001.
    let raw = fraction * size as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(size)
}

/// Stratified split: within every (actor, intended emotion) group,
/// `ceil(train_fraction * group_size)` clips chosen by a seeded shuffle go to
/// train and the rest to test.
pub fn split_train_test(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }

    let mut groups: BTreeMap<(&str, Emotion), Vec<usize>> = BTreeMap::new();
    for (i, clip) in dataset.clips().iter().enumerate() {
        groups
            .entry((clip.actor_id.as_str(), clip.intended))
            .or_default()
            .push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; dataset.len()];
    for members in groups.values_mut() {
        let k = train_count(train_fraction, members.len());
        members.shuffle(&mut rng);
        for &i in &members[..k] {
            in_train[i] = true;
        }
    }

    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (clip, train) in dataset.clips().iter().zip(in_train) {
        if train {
            split.train.push(clip.clip_id.clone());
        } else {
            split.test.push(clip.clip_id.clone());
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::Clip;

    fn grouped(actors: usize, per_emotion: usize) -> Dataset {
        let mut clips = Vec::new();
        for a in 0..actors {
            for e in Emotion::ALL {
                for k in 0..per_emotion {
                    clips.push(Clip {
                        clip_id: format!("a{a}_{e}_{k}"),
                        actor_id: format!("a{a}"),
                        sentence_id: "s".into(),
                        intended: e,
                    });
                }
            }
        }
        Dataset::new(clips, vec![], vec![]).unwrap()
    }

    #[test]
    fn one_actor_six_by_ten() {
        let ds = grouped(1, 10);
        let s = split_train_test(&ds, 0.8, 3).unwrap();
        assert_eq!(s.train.len(), 48);
        assert_eq!(s.test.len(), 12);
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = grouped(3, 7);
        assert_eq!(
            split_train_test(&ds, 0.8, 11).unwrap(),
            split_train_test(&ds, 0.8, 11).unwrap()
        );
        assert_ne!(
            split_train_test(&ds, 0.8, 11).unwrap(),
            split_train_test(&ds, 0.8, 12).unwrap()
        );
    }

    #[test]
    fn ceiling_absorbs_float_noise() {
        assert_eq!(train_count(0.7, 10), 7);
        assert_eq!(train_count(0.8, 10), 8);
        assert_eq!(train_count(0.8, 1), 1);
        assert_eq!(train_count(0.8, 3), 3);
        assert_eq!(train_count(0.5, 3), 2);
    }

    #[test]
    fn rejects_fraction_outside_open_interval() {
        let ds = grouped(1, 2);
        assert!(split_train_test(&ds, 0.0, 1).is_err());
        assert!(split_train_test(&ds, 1.0, 1).is_err());
    }
}
