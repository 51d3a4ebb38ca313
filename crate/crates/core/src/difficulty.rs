//! Per-clip difficulty from crowd votes: intended-vote share, vote entropy,
//! and the four agreement/alignment categories.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::{Dataset, Emotion, Modality, VoteRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    /// Share of raters choosing the intended emotion; higher is easier.
    IntendedEmotion,
    /// Shannon entropy (nats) of the vote distribution; higher is harder.
    Entropy,
}

impl ScoreMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMethod::IntendedEmotion => "intended",
            ScoreMethod::Entropy => "entropy",
        }
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "intended" | "intended_emotion" | "intendedemotion" => Ok(ScoreMethod::IntendedEmotion),
            "entropy" => Ok(ScoreMethod::Entropy),
            _ => Err(format!("unknown score method {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyScore {
    pub clip_id: String,
    pub method: ScoreMethod,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DifficultyCategory {
    ClearMatch,
    ClearMismatch,
    AmbiguousMatch,
    AmbiguousMismatch,
}

impl DifficultyCategory {
    pub const ALL: [DifficultyCategory; 4] = [
        DifficultyCategory::ClearMatch,
        DifficultyCategory::ClearMismatch,
        DifficultyCategory::AmbiguousMatch,
        DifficultyCategory::AmbiguousMismatch,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Category number 1..=4 as used by the IPA orderings.
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DifficultyCategory::ClearMatch => "clear_match",
            DifficultyCategory::ClearMismatch => "clear_mismatch",
            DifficultyCategory::AmbiguousMatch => "ambiguous_match",
            DifficultyCategory::AmbiguousMismatch => "ambiguous_mismatch",
        }
    }
}

impl fmt::Display for DifficultyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DifficultyCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "clearmatch" | "cm" | "1" => Ok(DifficultyCategory::ClearMatch),
            "clearmismatch" | "cmm" | "2" => Ok(DifficultyCategory::ClearMismatch),
            "ambiguousmatch" | "am" | "3" => Ok(DifficultyCategory::AmbiguousMatch),
            "ambiguousmismatch" | "amm" | "4" => Ok(DifficultyCategory::AmbiguousMismatch),
            _ => Err(format!("unknown difficulty category {s:?}")),
        }
    }
}

/// Thresholds of the rule classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleParams {
    /// A count is a clear majority when it exceeds this share of `N`.
    pub majority_threshold: f64,
    /// Minimum intended votes for an ambiguous clip to count as a match.
    pub multi_vote_min: u32,
}

impl Default for RuleParams {
    fn default() -> Self {
        RuleParams {
            majority_threshold: 0.5,
            multi_vote_min: 2,
        }
    }
}

pub fn score_intended(votes: &VoteRecord, intended: Emotion) -> DifficultyScore {
    DifficultyScore {
        clip_id: votes.clip_id.clone(),
        method: ScoreMethod::IntendedEmotion,
        value: f64::from(votes.count(intended)) / f64::from(votes.total()),
    }
}

pub fn score_entropy(votes: &VoteRecord) -> DifficultyScore {
    let n = f64::from(votes.total());
    // Fixed summation order so relabelled votes score bit-identically.
    let mut counts = *votes.counts();
    counts.sort_unstable();
    let value = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = f64::from(c) / n;
            -p * p.ln()
        })
        .sum::<f64>()
        // A point mass gives -0.0.
        .max(0.0);
    DifficultyScore {
        clip_id: votes.clip_id.clone(),
        method: ScoreMethod::Entropy,
        value,
    }
}

/// Four-way agreement/alignment rule.
///
/// An emotion whose count exceeds `majority_threshold * N` is a clear
/// majority; ties for the top count never qualify. Without a clear majority
/// the clip is an ambiguous match when the intended emotion received at
/// least `multi_vote_min` votes.
pub fn classify_rule(
    votes: &VoteRecord,
    intended: Emotion,
    params: &RuleParams,
) -> DifficultyCategory {
    let n = f64::from(votes.total());
    let counts = votes.counts();
    let max = *counts.iter().max().expect("six counts");
    let tied = counts.iter().filter(|&&c| c == max).count() > 1;
    let majority = if !tied && f64::from(max) > params.majority_threshold * n {
        counts.iter().position(|&c| c == max)
    } else {
        None
    };
    match majority {
        Some(idx) if idx == intended.index() => DifficultyCategory::ClearMatch,
        Some(_) => DifficultyCategory::ClearMismatch,
        None if votes.count(intended) >= params.multi_vote_min => {
            DifficultyCategory::AmbiguousMatch
        }
        None => DifficultyCategory::AmbiguousMismatch,
    }
}

fn vote_for<'a>(dataset: &'a Dataset, clip_id: &str, modality: Modality) -> Result<&'a VoteRecord> {
    dataset
        .vote(clip_id, modality)
        .ok_or_else(|| Error::integrity(format!("clip {clip_id} has no {modality} vote record")))
}

fn intended_of(dataset: &Dataset, clip_id: &str) -> Result<Emotion> {
    dataset
        .clip(clip_id)
        .map(|c| c.intended)
        .ok_or_else(|| Error::integrity(format!("unknown clip {clip_id}")))
}

/// Scores each listed clip from its `modality` votes.
pub fn score_clips<'a>(
    dataset: &Dataset,
    clip_ids: impl IntoIterator<Item = &'a str>,
    method: ScoreMethod,
    modality: Modality,
) -> Result<Vec<DifficultyScore>> {
    clip_ids
        .into_iter()
        .map(|id| {
            let votes = vote_for(dataset, id, modality)?;
            Ok(match method {
                ScoreMethod::IntendedEmotion => score_intended(votes, intended_of(dataset, id)?),
                ScoreMethod::Entropy => score_entropy(votes),
            })
        })
        .collect()
}

/// Categorises each listed clip from its `modality` votes.
pub fn classify_clips<'a>(
    dataset: &Dataset,
    clip_ids: impl IntoIterator<Item = &'a str>,
    modality: Modality,
    params: &RuleParams,
) -> Result<BTreeMap<String, DifficultyCategory>> {
    clip_ids
        .into_iter()
        .map(|id| {
            let votes = vote_for(dataset, id, modality)?;
            let cat = classify_rule(votes, intended_of(dataset, id)?, params);
            Ok((id.to_owned(), cat))
        })
        .collect()
}

/// Clips per category, indexed by [`DifficultyCategory::index`].
pub fn category_counts(
    dataset: &Dataset,
    modality: Modality,
    params: &RuleParams,
) -> Result<[usize; 4]> {
    let mut counts = [0usize; 4];
    for clip in dataset.clips() {
        let votes = vote_for(dataset, &clip.clip_id, modality)?;
        counts[classify_rule(votes, clip.intended, params).index()] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityAgreement {
    /// Per intended emotion; `None` when no clip has that intended emotion.
    pub per_emotion: BTreeMap<Emotion, f64>,
    pub all: f64,
    /// Ratings pooled per intended emotion.
    pub ratings: BTreeMap<Emotion, u64>,
}

/// Perceived-vs-intended match rates, pooled over individual ratings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub rows: BTreeMap<Modality, ModalityAgreement>,
}

pub fn agreement_table(dataset: &Dataset) -> AgreementTable {
    let mut hits: BTreeMap<Modality, [u64; 6]> = BTreeMap::new();
    let mut totals: BTreeMap<Modality, [u64; 6]> = BTreeMap::new();
    for vote in dataset.votes() {
        let Some(clip) = dataset.clip(&vote.clip_id) else {
            continue;
        };
        let e = clip.intended.index();
        hits.entry(vote.modality).or_default()[e] += u64::from(vote.count(clip.intended));
        totals.entry(vote.modality).or_default()[e] += u64::from(vote.total());
    }

    let rows = totals
        .into_iter()
        .map(|(m, tot)| {
            let hit = hits[&m];
            let mut per_emotion = BTreeMap::new();
            let mut ratings = BTreeMap::new();
            for e in Emotion::ALL {
                let t = tot[e.index()];
                if t > 0 {
                    per_emotion.insert(e, hit[e.index()] as f64 / t as f64);
                    ratings.insert(e, t);
                }
            }
            let all = hit.iter().sum::<u64>() as f64 / tot.iter().sum::<u64>() as f64;
            (
                m,
                ModalityAgreement {
                    per_emotion,
                    all,
                    ratings,
                },
            )
        })
        .collect();
    AgreementTable { rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: RuleParams,
    pub counts: [usize; 4],
    /// L1 distance between `counts` and the target.
    pub distance: usize,
}

impl Calibration {
    pub fn exact(&self) -> bool {
        self.distance == 0
    }
}

/// Grid search over rule parameters for the setting whose category counts are
/// closest (L1) to `target`. Earlier grid entries win ties.
pub fn calibrate_rule(
    dataset: &Dataset,
    modality: Modality,
    target: [usize; 4],
    thresholds: &[f64],
    multi_vote_mins: &[u32],
) -> Result<Calibration> {
    let mut best: Option<Calibration> = None;
    for &majority_threshold in thresholds {
        for &multi_vote_min in multi_vote_mins {
            let params = RuleParams {
                majority_threshold,
                multi_vote_min,
            };
            let counts = category_counts(dataset, modality, &params)?;
            let distance = counts.iter().zip(target).map(|(&a, b)| a.abs_diff(b)).sum();
            if best.as_ref().is_none_or(|b| distance < b.distance) {
                best = Some(Calibration {
                    params,
                    counts,
                    distance,
                });
            }
        }
    }
    best.ok_or_else(|| Error::config("calibration grid is empty"))
}
