//! Clips, votes and features, plus ingestion, splitting and synthetic data.

mod io;
mod split;
mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_annotations, load_dataset, load_features, write_annotations, write_features, FeatureFormat,
};
pub use split::{split_train_test, Split};
pub use synth::{synth_generate, AmbiguityProfile, SynthConfig};

/// The six emotion classes, in their fixed alphabetical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Emotion {
    #[serde(rename = "ANG")]
    Anger,
    #[serde(rename = "DIS")]
    Disgust,
    #[serde(rename = "FEA")]
    Fear,
    #[serde(rename = "HAP")]
    Happy,
    #[serde(rename = "NEU")]
    Neutral,
    #[serde(rename = "SAD")]
    Sad,
}

impl Emotion {
    pub const COUNT: usize = 6;

    pub const ALL: [Emotion; Emotion::COUNT] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Happy,
        Emotion::Neutral,
        Emotion::Sad,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Emotion> {
        Emotion::ALL.get(idx).copied()
    }

    /// Three-letter code used in annotation files.
    pub fn code(self) -> &'static str {
        match self {
            Emotion::Anger => "ANG",
            Emotion::Disgust => "DIS",
            Emotion::Fear => "FEA",
            Emotion::Happy => "HAP",
            Emotion::Neutral => "NEU",
            Emotion::Sad => "SAD",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Emotion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.code() == s)
            .ok_or_else(|| format!("unknown emotion token {s:?}"))
    }
}

/// Channel through which raters perceived a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Video,
    Multimodal,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Audio, Modality::Video, Modality::Multimodal];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Video => "video",
            Modality::Multimodal => "multimodal",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "audio" | "a" => Ok(Modality::Audio),
            "video" | "v" => Ok(Modality::Video),
            "multimodal" | "av" | "audiovisual" => Ok(Modality::Multimodal),
            _ => Err(format!("unknown modality {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clip {
    pub clip_id: String,
    pub actor_id: String,
    pub sentence_id: String,
    pub intended: Emotion,
}

/// Per-clip, per-modality vote counts over the six emotions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub clip_id: String,
    pub modality: Modality,
    counts: [u32; Emotion::COUNT],
    total: u32,
}

impl VoteRecord {
    /// Builds a record whose total is the sum of `counts`.
    pub fn new(
        clip_id: impl Into<String>,
        modality: Modality,
        counts: [u32; Emotion::COUNT],
    ) -> Result<Self> {
        let total = counts.iter().sum();
        VoteRecord::with_total(clip_id, modality, counts, total)
    }

    /// Builds a record with a declared total, checking it against the counts.
    pub fn with_total(
        clip_id: impl Into<String>,
        modality: Modality,
        counts: [u32; Emotion::COUNT],
        total: u32,
    ) -> Result<Self> {
        let clip_id = clip_id.into();
        let sum: u32 = counts.iter().sum();
        if total == 0 {
            return Err(Error::integrity(format!(
                "clip {clip_id}: vote total must be >= 1"
            )));
        }
        if sum != total {
            return Err(Error::integrity(format!(
                "clip {clip_id} ({modality}): votes sum to {sum} but N is {total}"
            )));
        }
        Ok(VoteRecord {
            clip_id,
            modality,
            counts,
            total,
        })
    }

    pub fn counts(&self) -> &[u32; Emotion::COUNT] {
        &self.counts
    }

    pub fn count(&self, emotion: Emotion) -> u32 {
        self.counts[emotion.index()]
    }

    /// Number of raters, `N`.
    pub fn total(&self) -> u32 {
        self.total
    }
}

/// A `frames x dim` feature matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub clip_id: String,
    frames: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(
        clip_id: impl Into<String>,
        frames: usize,
        dim: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let clip_id = clip_id.into();
        if frames == 0 || dim == 0 {
            return Err(Error::integrity(format!(
                "clip {clip_id}: feature matrix must be non-empty (T={frames}, D={dim})"
            )));
        }
        if data.len() != frames * dim {
            return Err(Error::integrity(format!(
                "clip {clip_id}: expected {} feature values, found {}",
                frames * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::integrity(format!(
                "clip {clip_id}: non-finite feature value at index {pos}"
            )));
        }
        Ok(FeatureSequence {
            clip_id,
            frames,
            dim,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Immutable collection of clips with their votes and (optional) features.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    clips: Vec<Clip>,
    votes: Vec<VoteRecord>,
    features: BTreeMap<String, FeatureSequence>,
    clip_index: HashMap<String, usize>,
    vote_index: HashMap<(String, Modality), usize>,
}

impl Dataset {
    /// Assembles a dataset, enforcing referential integrity.
    pub fn new(
        clips: Vec<Clip>,
        votes: Vec<VoteRecord>,
        features: Vec<FeatureSequence>,
    ) -> Result<Self> {
        let mut clip_index = HashMap::with_capacity(clips.len());
        for (i, clip) in clips.iter().enumerate() {
            if clip_index.insert(clip.clip_id.clone(), i).is_some() {
                return Err(Error::integrity(format!(
                    "duplicate clip_id {}",
                    clip.clip_id
                )));
            }
        }

        let mut vote_index = HashMap::with_capacity(votes.len());
        for (i, vote) in votes.iter().enumerate() {
            if !clip_index.contains_key(&vote.clip_id) {
                return Err(Error::integrity(format!(
                    "vote record references unknown clip {}",
                    vote.clip_id
                )));
            }
            if vote_index
                .insert((vote.clip_id.clone(), vote.modality), i)
                .is_some()
            {
                return Err(Error::integrity(format!(
                    "more than one {} vote record for clip {}",
                    vote.modality, vote.clip_id
                )));
            }
        }

        let mut feature_map = BTreeMap::new();
        let mut dim = None;
        for seq in features {
            if !clip_index.contains_key(&seq.clip_id) {
                return Err(Error::integrity(format!(
                    "features reference unknown clip {}",
                    seq.clip_id
                )));
            }
            match dim {
                None => dim = Some(seq.dim),
                Some(d) if d != seq.dim => {
                    return Err(Error::integrity(format!(
                        "clip {}: feature dimension {} differs from dataset dimension {d}",
                        seq.clip_id, seq.dim
                    )))
                }
                Some(_) => {}
            }
            let id = seq.clip_id.clone();
            if feature_map.insert(id.clone(), seq).is_some() {
                return Err(Error::integrity(format!(
                    "duplicate feature record for clip {id}"
                )));
            }
        }

        Ok(Dataset {
            clips,
            votes,
            features: feature_map,
            clip_index,
            vote_index,
        })
    }

    pub fn clips(&self) -> &[Clip] {
        &self.clips
    }

    pub fn votes(&self) -> &[VoteRecord] {
        &self.votes
    }

    pub fn features(&self) -> &BTreeMap<String, FeatureSequence> {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn clip(&self, clip_id: &str) -> Option<&Clip> {
        self.clip_index.get(clip_id).map(|&i| &self.clips[i])
    }

    pub fn vote(&self, clip_id: &str, modality: Modality) -> Option<&VoteRecord> {
        self.vote_index
            .get(&(clip_id.to_owned(), modality))
            .map(|&i| &self.votes[i])
    }

    pub fn feature(&self, clip_id: &str) -> Option<&FeatureSequence> {
        self.features.get(clip_id)
    }

    /// Feature dimensionality `D`, if any features are loaded.
    pub fn feature_dim(&self) -> Option<usize> {
        self.features.values().next().map(|f| f.dim())
    }

    /// Position of a clip in file order.
    pub fn position(&self, clip_id: &str) -> Option<usize> {
        self.clip_index.get(clip_id).copied()
    }

    pub fn clip_ids(&self) -> impl Iterator<Item = &str> {
        self.clips.iter().map(|c| c.clip_id.as_str())
    }

    /// Returns a copy restricted to `keep`, preserving file order.
    pub fn subset(&self, keep: &HashSet<String>) -> Result<Dataset> {
        let clips = self
            .clips
            .iter()
            .filter(|c| keep.contains(&c.clip_id))
            .cloned()
            .collect();
        let votes = self
            .votes
            .iter()
            .filter(|v| keep.contains(&v.clip_id))
            .cloned()
            .collect();
        let features = self
            .features
            .values()
            .filter(|f| keep.contains(&f.clip_id))
            .cloned()
            .collect();
        Dataset::new(clips, votes, features)
    }
}
