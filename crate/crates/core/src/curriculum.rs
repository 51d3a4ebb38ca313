//! Four-bin curricula and the cumulative stage plans built from them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::difficulty::{DifficultyCategory, DifficultyScore, ScoreMethod};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinLabel {
    Easy,
    BorderlineEasy,
    BorderlineTough,
    Tough,
}

impl BinLabel {
    pub const ALL: [BinLabel; 4] = [
        BinLabel::Easy,
        BinLabel::BorderlineEasy,
        BinLabel::BorderlineTough,
        BinLabel::Tough,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The seven training strategies compared by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "String")]
pub enum Strategy {
    IntendedScore,
    EntropyScore,
    Ipa1,
    Ipa2,
    Ipa3,
    Random,
    None,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::None,
        Strategy::Random,
        Strategy::IntendedScore,
        Strategy::EntropyScore,
        Strategy::Ipa1,
        Strategy::Ipa2,
        Strategy::Ipa3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::IntendedScore => "intended_score",
            Strategy::EntropyScore => "entropy_score",
            Strategy::Ipa1 => "ipa1",
            Strategy::Ipa2 => "ipa2",
            Strategy::Ipa3 => "ipa3",
            Strategy::Random => "random",
            Strategy::None => "none",
        }
    }

    pub fn is_curriculum(self) -> bool {
        self != Strategy::None
    }

    pub fn ordering(self) -> Option<IpaOrdering> {
        match self {
            Strategy::Ipa1 => Some(IpaOrdering::Ipa1),
            Strategy::Ipa2 => Some(IpaOrdering::Ipa2),
            Strategy::Ipa3 => Some(IpaOrdering::Ipa3),
            _ => None,
        }
    }

    pub fn score_method(self) -> Option<ScoreMethod> {
        match self {
            Strategy::IntendedScore => Some(ScoreMethod::IntendedEmotion),
            Strategy::EntropyScore => Some(ScoreMethod::Entropy),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "intendedscore" | "intended" => Ok(Strategy::IntendedScore),
            "entropyscore" | "entropy" => Ok(Strategy::EntropyScore),
            "ipa1" => Ok(Strategy::Ipa1),
            "ipa2" => Ok(Strategy::Ipa2),
            "ipa3" => Ok(Strategy::Ipa3),
            "random" => Ok(Strategy::Random),
            "none" | "noncurriculum" | "baseline" => Ok(Strategy::None),
            _ => Err(format!("unknown strategy {s:?}")),
        }
    }
}

impl TryFrom<String> for Strategy {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Category orderings for the rule-based curricula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpaOrdering {
    /// Agreement strength first: 1, 2, 3, 4.
    Ipa1,
    /// Intended-label alignment first: 1, 3, 4, 2.
    Ipa2,
    /// Compromise: 1, 3, 2, 4.
    Ipa3,
}

impl IpaOrdering {
    /// Category placed in each bin, Easy first.
    pub fn order(self) -> [DifficultyCategory; 4] {
        use DifficultyCategory::*;
        match self {
            IpaOrdering::Ipa1 => [ClearMatch, ClearMismatch, AmbiguousMatch, AmbiguousMismatch],
            IpaOrdering::Ipa2 => [ClearMatch, AmbiguousMatch, AmbiguousMismatch, ClearMismatch],
            IpaOrdering::Ipa3 => [ClearMatch, AmbiguousMatch, ClearMismatch, AmbiguousMismatch],
        }
    }

    pub fn strategy(self) -> Strategy {
        match self {
            IpaOrdering::Ipa1 => Strategy::Ipa1,
            IpaOrdering::Ipa2 => Strategy::Ipa2,
            IpaOrdering::Ipa3 => Strategy::Ipa3,
        }
    }
}

/// Which way a score runs relative to difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Larger scores are harder (entropy).
    AscendingHard,
    /// Larger scores are easier (intended-vote share).
    DescendingHard,
}

impl ScoreMethod {
    pub fn direction(self) -> Direction {
        match self {
            ScoreMethod::IntendedEmotion => Direction::DescendingHard,
            ScoreMethod::Entropy => Direction::AscendingHard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Provenance {
    Score(f64),
    Category(DifficultyCategory),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bins {
    pub easy: Vec<String>,
    pub borderline_easy: Vec<String>,
    pub borderline_tough: Vec<String>,
    pub tough: Vec<String>,
}

impl Bins {
    pub fn from_array([easy, borderline_easy, borderline_tough, tough]: [Vec<String>; 4]) -> Self {
        Bins {
            easy,
            borderline_easy,
            borderline_tough,
            tough,
        }
    }

    pub fn get(&self, label: BinLabel) -> &[String] {
        match label {
            BinLabel::Easy => &self.easy,
            BinLabel::BorderlineEasy => &self.borderline_easy,
            BinLabel::BorderlineTough => &self.borderline_tough,
            BinLabel::Tough => &self.tough,
        }
    }

    /// Bins in Easy-to-Tough order.
    pub fn iter(&self) -> impl Iterator<Item = (BinLabel, &[String])> {
        BinLabel::ALL.into_iter().map(move |l| (l, self.get(l)))
    }

    pub fn sizes(&self) -> [usize; 4] {
        BinLabel::ALL.map(|l| self.get(l).len())
    }

    pub fn total(&self) -> usize {
        self.sizes().iter().sum()
    }
}

/// Ordered assignment of training clips to the four bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumManifest {
    pub name: String,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub bins: Bins,
    #[serde(default)]
    pub provenance: BTreeMap<String, Provenance>,
}

impl CurriculumManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CurriculumManifest::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    /// All clips in Easy-to-Tough order.
    pub fn clip_ids(&self) -> impl Iterator<Item = &String> {
        self.bins.iter().flat_map(|(_, ids)| ids.iter())
    }

    /// Partition violations, optionally checked against the expected train set.
    pub fn violations(&self, train_set: Option<&HashSet<String>>) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen: HashMap<&str, BinLabel> = HashMap::new();
        for (label, ids) in self.bins.iter() {
            for id in ids {
                if let Some(prev) = seen.insert(id, label) {
                    if prev == label {
                        out.push(format!("clip {id} listed twice in bin {label:?}"));
                    } else {
                        out.push(format!("clip {id} appears in both {prev:?} and {label:?}"));
                    }
                }
            }
        }
        if let Some(train) = train_set {
            let mut missing: Vec<&String> = train
                .iter()
                .filter(|id| !seen.contains_key(id.as_str()))
                .collect();
            missing.sort();
            out.extend(
                missing
                    .into_iter()
                    .map(|id| format!("train clip {id} missing from manifest")),
            );
            let mut extra: Vec<&str> = seen
                .keys()
                .copied()
                .filter(|id| !train.contains(*id))
                .collect();
            extra.sort();
            out.extend(
                extra
                    .into_iter()
                    .map(|id| format!("clip {id} is not in the train set")),
            );
        }
        out
    }
}

/// Bin sizes for `n` clips: as equal as possible, remainder to the earliest bins.
pub fn balanced_sizes(n: usize) -> [usize; 4] {
    let (base, rem) = (n / 4, n % 4);
    [0, 1, 2, 3].map(|i| base + usize::from(i < rem))
}

fn split_balanced(ordered: Vec<String>) -> [Vec<String>; 4] {
    let sizes = balanced_sizes(ordered.len());
    let mut it = ordered.into_iter();
    sizes.map(|s| it.by_ref().take(s).collect())
}

/// Quartile curriculum from continuous scores, easiest first, ties broken
/// by clip id.
pub fn bin_by_score(
    scores: &[DifficultyScore],
    direction: Direction,
) -> Result<CurriculumManifest> {
    let Some(first) = scores.first() else {
        return Err(Error::integrity("no scores to bin"));
    };
    let method = first.method;
    let mut ids = HashSet::with_capacity(scores.len());
    for s in scores {
        if s.method != method {
            return Err(Error::integrity("scores mix intended and entropy methods"));
        }
        if !s.value.is_finite() {
            return Err(Error::integrity(format!(
                "clip {} has a non-finite score",
                s.clip_id
            )));
        }
        if !ids.insert(s.clip_id.as_str()) {
            return Err(Error::integrity(format!(
                "duplicate score for clip {}",
                s.clip_id
            )));
        }
    }

    let mut sorted: Vec<&DifficultyScore> = scores.iter().collect();
    sorted.sort_by(|a, b| {
        let by_value = match direction {
            Direction::AscendingHard => a.value.total_cmp(&b.value),
            Direction::DescendingHard => b.value.total_cmp(&a.value),
        };
        by_value.then_with(|| a.clip_id.cmp(&b.clip_id))
    });

    let strategy = match method {
        ScoreMethod::IntendedEmotion => Strategy::IntendedScore,
        ScoreMethod::Entropy => Strategy::EntropyScore,
    };
    let provenance = scores
        .iter()
        .map(|s| (s.clip_id.clone(), Provenance::Score(s.value)))
        .collect();
    let ordered = sorted.into_iter().map(|s| s.clip_id.clone()).collect();
    Ok(CurriculumManifest {
        name: strategy.as_str().to_owned(),
        strategy,
        seed: None,
        bins: Bins::from_array(split_balanced(ordered)),
        provenance,
    })
}

/// Rule-based curriculum; bins keep their natural category sizes.
pub fn bin_by_category(
    categories: &BTreeMap<String, DifficultyCategory>,
    ordering: IpaOrdering,
) -> CurriculumManifest {
    let order = ordering.order();
    let mut bins: [Vec<String>; 4] = Default::default();
    for (id, cat) in categories {
        let slot = order
            .iter()
            .position(|c| c == cat)
            .expect("ordering covers all categories");
        bins[slot].push(id.clone());
    }
    let strategy = ordering.strategy();
    CurriculumManifest {
        name: strategy.as_str().to_owned(),
        strategy,
        seed: None,
        bins: Bins::from_array(bins),
        provenance: categories
            .iter()
            .map(|(id, &c)| (id.clone(), Provenance::Category(c)))
            .collect(),
    }
}

/// [`bin_by_category`] after checking every train clip is categorised.
pub fn bin_train_by_category(
    train: &[String],
    categories: &BTreeMap<String, DifficultyCategory>,
    ordering: IpaOrdering,
) -> Result<CurriculumManifest> {
    let mut subset = BTreeMap::new();
    for id in train {
        let cat = categories
            .get(id)
            .ok_or_else(|| Error::integrity(format!("train clip {id} has no category")))?;
        subset.insert(id.clone(), *cat);
    }
    Ok(bin_by_category(&subset, ordering))
}

/// Random curriculum: seeded shuffle, then four balanced parts.
pub fn bin_random(train: &[String], seed: u64) -> Result<CurriculumManifest> {
    if train.is_empty() {
        return Err(Error::integrity(
            "random curriculum needs a non-empty train set",
        ));
    }
    let mut ids: Vec<String> = train.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() != train.len() {
        return Err(Error::integrity("train set contains duplicate clip ids"));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(CurriculumManifest {
        name: Strategy::Random.as_str().to_owned(),
        strategy: Strategy::Random,
        seed: Some(seed),
        bins: Bins::from_array(split_balanced(ids)),
        provenance: BTreeMap::new(),
    })
}

/// Degenerate manifest for non-curriculum training: everything in one bin.
pub fn no_curriculum(train: &[String]) -> CurriculumManifest {
    CurriculumManifest {
        name: Strategy::None.as_str().to_owned(),
        strategy: Strategy::None,
        seed: None,
        bins: Bins {
            easy: train.to_vec(),
            ..Bins::default()
        },
        provenance: BTreeMap::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    /// 1-based stage number.
    pub index: usize,
    /// Cumulative clip set, earlier bins first.
    pub clips: Vec<String>,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub strategy: Strategy,
    pub batch_size: usize,
    pub stages: Vec<Stage>,
}

impl StagePlan {
    /// Single stage over the full train set.
    pub fn non_curriculum(
        train: &[String],
        total_epochs: usize,
        batch_size: usize,
    ) -> Result<StagePlan> {
        check_positive(batch_size, total_epochs)?;
        Ok(StagePlan {
            strategy: Strategy::None,
            batch_size,
            stages: vec![Stage {
                index: 1,
                clips: train.to_vec(),
                epochs: total_epochs,
            }],
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.clips.len()).collect()
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.epochs).sum()
    }

    /// Size of the final (full) stage.
    pub fn n_train(&self) -> usize {
        self.stages.last().map_or(0, |s| s.clips.len())
    }
}

fn check_positive(batch_size: usize, epochs: usize) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be >= 1"));
    }
    if epochs == 0 {
        return Err(Error::config("every stage needs at least one epoch"));
    }
    Ok(())
}

/// Equal split of `total` epochs over four stages, remainder to the earliest.
pub fn default_epochs(total: usize) -> [usize; 4] {
    balanced_sizes(total)
}

/// Cumulative plan: stage `k` trains on the union of the first `k` bins.
/// A non-curriculum manifest yields one stage with the summed epochs.
pub fn build_stages(
    manifest: &CurriculumManifest,
    epochs_per_stage: &[usize],
    batch_size: usize,
) -> Result<StagePlan> {
    let violations = manifest.violations(None);
    if !violations.is_empty() {
        return Err(Error::integrity(format!(
            "manifest {}: {}",
            manifest.name,
            violations.join("; ")
        )));
    }
    if epochs_per_stage.len() != 4 {
        return Err(Error::config(format!(
            "expected 4 per-stage epoch counts, got {}",
            epochs_per_stage.len()
        )));
    }
    for &e in epochs_per_stage {
        check_positive(batch_size, e)?;
    }

    if manifest.strategy == Strategy::None {
        let all: Vec<String> = manifest.clip_ids().cloned().collect();
        return StagePlan::non_curriculum(&all, epochs_per_stage.iter().sum(), batch_size);
    }

    let mut cumulative: Vec<String> = Vec::with_capacity(manifest.bins.total());
    let stages = manifest
        .bins
        .iter()
        .zip(epochs_per_stage)
        .enumerate()
        .map(|(k, ((_, ids), &epochs))| {
            cumulative.extend(ids.iter().cloned());
            Stage {
                index: k + 1,
                clips: cumulative.clone(),
                epochs,
            }
        })
        .collect();
    Ok(StagePlan {
        strategy: manifest.strategy,
        batch_size,
        stages,
    })
}
