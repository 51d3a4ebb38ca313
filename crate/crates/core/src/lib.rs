//! Perception-difficulty curriculum learning toolkit.
//!
//! Crowd-sourced emotion votes are turned into difficulty scores or
//! agreement/alignment categories, binned into four ordered curricula, and
//! consumed by a staged trainer whose gradient-update cost is accounted for
//! in closed form.

pub mod annotation;
pub mod cost;
pub mod curriculum;
pub mod difficulty;
pub mod error;
pub mod pipeline;
pub mod stats;
pub mod trainer;

pub use annotation::{Clip, Dataset, Emotion, FeatureSequence, Modality, VoteRecord};
pub use cost::{updates_cl, updates_noncl, CostReport};
pub use curriculum::{BinLabel, CurriculumManifest, StagePlan, Strategy};
pub use difficulty::{DifficultyCategory, DifficultyScore, RuleParams, ScoreMethod};
pub use error::{Error, Result};
pub use stats::{SignificanceResult, TrialResult};
