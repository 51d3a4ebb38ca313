//! End-to-end run: data → difficulty → manifests → trials → cost and summary
//! reports, every step written to disk under one output directory.

mod files;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotation::{
    load_dataset, split_train_test, synth_generate, write_annotations, write_features, Dataset,
    Modality, Split, SynthConfig,
};
use crate::cost::{updates_cl, CostReport};
use crate::curriculum::{
    bin_by_score, bin_random, bin_train_by_category, build_stages, no_curriculum,
};
use crate::curriculum::{CurriculumManifest, StagePlan, Strategy};
use crate::difficulty::{category_counts, classify_clips, score_clips, RuleParams, ScoreMethod};
use crate::error::{Error, Result};
use crate::stats::report::{curve_csv, curve_svg, summary_csv};
use crate::stats::{aggregate, Summary, TrialResult};
use crate::trainer::{run_trials, TrainConfig};

pub use files::{
    categories_csv, load_trials, read_difficulty_csv, scores_csv, DifficultyFile, DIFFICULTY_HEADER,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const FAILED_MARKER: &str = "FAILED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Files {
        annotations: PathBuf,
        features: PathBuf,
    },
    Synth {
        seed: u64,
        #[serde(default)]
        config: SynthConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

fn default_modality() -> Modality {
    Modality::Audio
}

/// Declarative description of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default = "default_modality")]
    pub modality: Modality,
    pub strategies: Vec<Strategy>,
    pub trial_seeds: Vec<u64>,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub rules: RuleParams,
    #[serde(default)]
    pub trainer: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Makes relative data and output paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Files {
            annotations,
            features,
        } = &mut self.data
        {
            fix(annotations);
            fix(features);
        }
        if let Some(out) = &mut self.output_dir {
            fix(out);
        }
    }

    /// Everything checkable without doing any work.
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::config("at least one strategy is required"));
        }
        let unique: HashSet<_> = self.strategies.iter().collect();
        if unique.len() != self.strategies.len() {
            return Err(Error::config("strategies contain duplicates"));
        }
        if self.trial_seeds.len() < 2 {
            return Err(Error::config("at least 2 trial seeds are required"));
        }
        let unique: HashSet<_> = self.trial_seeds.iter().collect();
        if unique.len() != self.trial_seeds.len() {
            return Err(Error::config("trial seeds contain duplicates"));
        }
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::config(format!(
                "train_fraction must lie in (0, 1), got {f}"
            )));
        }
        let t = self.rules.majority_threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::config(format!(
                "majority_threshold must lie in (0, 1), got {t}"
            )));
        }
        self.trainer.validate()?;
        match &self.data {
            DataSource::Synth { config, .. } => config.validate()?,
            DataSource::Files {
                annotations,
                features,
            } => {
                for p in [annotations, features] {
                    if !p.is_file() {
                        return Err(Error::config(format!(
                            "input file {} does not exist",
                            p.display()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The baseline used for significance tests, when it is part of the run.
    pub fn baseline(&self) -> Option<Strategy> {
        self.strategies
            .contains(&Strategy::None)
            .then_some(Strategy::None)
    }
}

/// Difficulty-derived manifest for one strategy restricted to `train`.
/// Score strategies need a score file of the matching method and rule
/// strategies a category file; `seed` is required by the random curriculum.
pub fn build_manifest(
    strategy: Strategy,
    train: &[String],
    difficulty: Option<&DifficultyFile>,
    seed: Option<u64>,
) -> Result<CurriculumManifest> {
    match strategy {
        Strategy::None => Ok(no_curriculum(train)),
        Strategy::Random => {
            let seed = seed.ok_or_else(|| Error::config("the random curriculum needs a seed"))?;
            bin_random(train, seed)
        }
        Strategy::IntendedScore | Strategy::EntropyScore => {
            let method = strategy.score_method().expect("score strategy");
            let Some(DifficultyFile::Scores(scores)) = difficulty else {
                return Err(Error::config(format!(
                    "strategy {strategy} needs {method} scores"
                )));
            };
            let by_id: BTreeMap<&str, _> = scores.iter().map(|s| (s.clip_id.as_str(), s)).collect();
            let mut picked = Vec::with_capacity(train.len());
            for id in train {
                let s = by_id
                    .get(id.as_str())
                    .ok_or_else(|| Error::integrity(format!("train clip {id} has no score")))?;
                if s.method != method {
                    return Err(Error::config(format!(
                        "strategy {strategy} needs {method} scores, found {}",
                        s.method
                    )));
                }
                picked.push((*s).clone());
            }
            let mut manifest = bin_by_score(&picked, method.direction())?;
            manifest.strategy = strategy;
            manifest.name = strategy.as_str().to_owned();
            Ok(manifest)
        }
        Strategy::Ipa1 | Strategy::Ipa2 | Strategy::Ipa3 => {
            let Some(DifficultyFile::Categories(cats)) = difficulty else {
                return Err(Error::config(format!(
                    "strategy {strategy} needs rule categories"
                )));
            };
            bin_train_by_category(train, cats, strategy.ordering().expect("rule strategy"))
        }
    }
}

/// What a finished run produced, relative to its output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub n_clips: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Rule categories over the whole dataset, Easy-to-Tough category order.
    pub category_counts: [usize; 4],
    pub artifacts: Vec<String>,
}

/// Results of [`run_pipeline`] kept in memory for callers.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub summary: Summary,
    pub trials: Vec<TrialResult>,
    pub costs: BTreeMap<Strategy, CostReport>,
    pub manifest: RunManifest,
}

struct Writer<'a> {
    root: &'a Path,
    written: Vec<String>,
}

impl Writer<'_> {
    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(p)
    }

    fn text(&mut self, rel: &str, body: &str) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        self.written.push(rel.to_owned());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.text(rel, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

/// Runs the whole pipeline into `out_dir`. On failure everything written so
/// far is kept and a `FAILED` marker holding the error message is added.
pub fn run_pipeline(config: &RunConfig, out_dir: &Path) -> Result<PipelineOutcome> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let marker = out_dir.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    let result = run_inner(config, out_dir);
    if let Err(e) = &result {
        // Best effort: the original error matters more than a failed marker write.
        let _ = fs::write(&marker, format!("{e}\n"));
    }
    result
}

fn run_inner(config: &RunConfig, out_dir: &Path) -> Result<PipelineOutcome> {
    let mut w = Writer {
        root: out_dir,
        written: Vec::new(),
    };

    let dataset = match &config.data {
        DataSource::Files {
            annotations,
            features,
        } => load_dataset(annotations, Some(features))?,
        DataSource::Synth {
            seed,
            config: synth,
        } => {
            let ds = synth_generate(synth, *seed)?;
            write_annotations(&w.path("data/annotations.csv")?, &ds)?;
            write_features(&w.path("data/features.bin")?, &ds)?;
            w.written.push("data/annotations.csv".into());
            w.written.push("data/features.bin".into());
            ds
        }
    };

    let split = split_train_test(&dataset, config.split.train_fraction, config.split.seed)?;
    w.json("split.json", &split)?;

    let ids: Vec<&str> = dataset.clip_ids().collect();
    let ids = ids.iter().copied();
    let intended = DifficultyFile::Scores(score_clips(
        &dataset,
        ids.clone(),
        ScoreMethod::IntendedEmotion,
        config.modality,
    )?);
    let entropy = DifficultyFile::Scores(score_clips(
        &dataset,
        ids.clone(),
        ScoreMethod::Entropy,
        config.modality,
    )?);
    let categories = DifficultyFile::Categories(classify_clips(
        &dataset,
        ids,
        config.modality,
        &config.rules,
    )?);
    if let (DifficultyFile::Scores(i), DifficultyFile::Scores(e), DifficultyFile::Categories(c)) =
        (&intended, &entropy, &categories)
    {
        w.text("difficulty/intended.csv", &scores_csv(i))?;
        w.text("difficulty/entropy.csv", &scores_csv(e))?;
        w.text("difficulty/categories.csv", &categories_csv(c))?;
    }
    let difficulty_for = |s: Strategy| match s {
        Strategy::IntendedScore => Some(&intended),
        Strategy::EntropyScore => Some(&entropy),
        Strategy::Ipa1 | Strategy::Ipa2 | Strategy::Ipa3 => Some(&categories),
        Strategy::None | Strategy::Random => None,
    };

    let tc = &config.trainer;
    let mut trials = Vec::new();
    let mut costs = BTreeMap::new();
    for &strategy in &config.strategies {
        let diff = difficulty_for(strategy);
        let plan_for = |seed: u64| -> Result<StagePlan> {
            let m = build_manifest(strategy, &split.train, diff, Some(seed))?;
            build_stages(&m, &tc.epochs_per_stage, tc.batch_size)
        };

        if strategy == Strategy::Random {
            for &seed in &config.trial_seeds {
                let m = build_manifest(strategy, &split.train, diff, Some(seed))?;
                w.json(&format!("manifests/random/seed_{seed}.json"), &m)?;
            }
        } else {
            let m = build_manifest(strategy, &split.train, diff, None)?;
            w.json(&format!("manifests/{strategy}.json"), &m)?;
        }
        // Bin sizes do not depend on the seed, so one plan prices them all.
        let cost = updates_cl(&plan_for(config.trial_seeds[0])?);
        w.json(&format!("cost/{strategy}.json"), &cost)?;
        costs.insert(strategy, cost);

        let results = run_trials(&dataset, &split, tc, &config.trial_seeds, plan_for)?;
        for t in &results {
            w.json(&format!("trials/{strategy}/seed_{}.json", t.seed), t)?;
        }
        trials.extend(results);
    }

    let mut cost_table = String::new();
    for (s, c) in &costs {
        cost_table.push_str(&format!("[{s}]\n{c}\n"));
    }
    w.text("report/cost.txt", &cost_table)?;

    let summary = aggregate(&trials, Strategy::None)?;
    w.json("report/summary.json", &summary)?;
    w.text("report/summary.csv", &summary_csv(&summary))?;
    w.text("report/curve.csv", &curve_csv(&trials)?)?;
    w.text(
        "report/curve.svg",
        &curve_svg(&trials, "Test accuracy vs. gradient updates")?,
    )?;

    let mut artifacts = w.written.clone();
    artifacts.push("run_manifest.json".into());
    let manifest = RunManifest {
        tool: "percept".to_owned(),
        version: TOOL_VERSION.to_owned(),
        config: config.clone(),
        n_clips: dataset.len(),
        n_train: split.train.len(),
        n_test: split.test.len(),
        category_counts: category_counts(&dataset, config.modality, &config.rules)?,
        artifacts,
    };
    w.json("run_manifest.json", &manifest)?;

    Ok(PipelineOutcome {
        summary,
        trials,
        costs,
        manifest,
    })
}

/// Dataset and split exactly as a run with `config` would see them.
pub fn prepare_data(config: &RunConfig) -> Result<(Dataset, Split)> {
    let dataset = match &config.data {
        DataSource::Files {
            annotations,
            features,
        } => load_dataset(annotations, Some(features))?,
        DataSource::Synth { seed, config } => synth_generate(config, *seed)?,
    };
    let split = split_train_test(&dataset, config.split.train_fraction, config.split.seed)?;
    Ok((dataset, split))
}
