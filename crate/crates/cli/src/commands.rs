//! Subcommands. Each one reads and writes files under an output directory
//! laid out exactly like a `pipeline` run, so the steps compose.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use percept_core::annotation::{
    load_annotations, load_dataset, split_train_test, synth_generate, write_annotations,
    write_features, AmbiguityProfile, Dataset, Split, SynthConfig,
};
use percept_core::cost::updates_for_sizes;
use percept_core::curriculum::{build_stages, CurriculumManifest};
use percept_core::difficulty::{
    agreement_table, calibrate_rule, category_counts, classify_clips, score_clips,
};
use percept_core::pipeline::{
    build_manifest, categories_csv, load_trials, read_difficulty_csv, run_pipeline, scores_csv,
    RunConfig,
};
use percept_core::stats::aggregate;
use percept_core::stats::report::{curve_csv, curve_svg, summary_csv};
use percept_core::trainer::{run_trials, TrainConfig};
use percept_core::{updates_cl, DifficultyCategory, Modality, RuleParams, ScoreMethod, Strategy};

pub const OUT_DIR_ENV: &str = "PERCEPT_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "percept-out";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration files.
    Validation(String),
    Core(percept_core::Error),
    /// Manifest invariant violations found by `validate`.
    Violations(Vec<String>),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Violations(v) => write!(f, "{} manifest violation(s)", v.len()),
        }
    }
}

impl From<percept_core::Error> for CliError {
    fn from(e: percept_core::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "percept",
    version,
    about = "Perception-difficulty curricula: scoring, binning, staged training and cost accounting"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a dataset, print agreement statistics and write the train/test split.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Continuous difficulty scores per clip.
    Score(ScoreArgs),
    /// Rule-based difficulty categories per clip.
    Classify(ClassifyArgs),
    /// Build a curriculum manifest for one strategy.
    Curriculum(CurriculumArgs),
    /// Gradient-update cost of a manifest.
    Cost(CostArgs),
    /// Run seeded training trials for one manifest.
    Train(TrainArgs),
    /// Summary table, significance tests and accuracy-vs-updates curves.
    Report(ReportArgs),
    /// Check manifest invariants and print bin sizes and cost reductions.
    Validate(ValidateArgs),
    /// Run every step from one config file.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output directory [default: $PERCEPT_OUT_DIR, else ./percept-out]
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn dir(&self) -> PathBuf {
        resolve_out(self.out.clone(), None)
    }
}

fn resolve_out(flag: Option<PathBuf>, config: Option<PathBuf>) -> PathBuf {
    flag.or(config)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// TOML file with generator settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_clips: Option<usize>,
    #[arg(long)]
    n_actors: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    /// all_clear_match, uniform or table2_shaped
    #[arg(long)]
    profile: Option<String>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// intended or entropy
    #[arg(long)]
    method: ScoreMethod,
    #[arg(long, default_value = "audio")]
    modality: Modality,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value = "audio")]
    modality: Modality,
    #[arg(long, default_value_t = 0.5)]
    majority_threshold: f64,
    #[arg(long, default_value_t = 2)]
    multi_vote_min: u32,
    /// Also search rule settings for these target category counts (4 values).
    #[arg(long, value_parser = four)]
    calibrate: Option<[usize; 4]>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct CurriculumArgs {
    #[arg(long)]
    strategy: Strategy,
    /// Split JSON from `ingest`; without it every scored clip is training data.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Score or category CSV from `score` / `classify`.
    #[arg(long)]
    difficulty: Option<PathBuf>,
    /// Seeds for the random curriculum, one manifest each.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct CostArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, value_parser = four, default_value = "50,50,50,50")]
    epochs: [usize; 4],
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Manifest file, or a directory of `seed_<k>.json` manifests (one per seed).
    #[arg(long)]
    manifest: PathBuf,
    /// Trainer TOML; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_parser = four)]
    epochs: Option<[usize; 4]>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Trial JSON files or directories containing them.
    #[arg(long, required = true, num_args = 1..)]
    trials: Vec<PathBuf>,
    #[arg(long, default_value = "none")]
    baseline: Strategy,
    #[arg(long, default_value = "Test accuracy vs. gradient updates")]
    title: String,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Check the manifest covers exactly this split's train set.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [32, 64])]
    batch_sizes: Vec<usize>,
    #[arg(long, value_parser = four, default_value = "50,50,50,50")]
    epochs: [usize; 4],
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    modality: Option<Modality>,
    /// Output directory [default: config output_dir, then $PERCEPT_OUT_DIR, else ./percept-out]
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exactly four comma-separated counts, one per bin or stage.
fn four(s: &str) -> std::result::Result<[usize; 4], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<usize>| format!("expected 4 comma-separated values, got {}", v.len()))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Score(a) => score(a),
        Command::Classify(a) => classify(a),
        Command::Curriculum(a) => curriculum(a),
        Command::Cost(a) => cost(a),
        Command::Train(a) => train(a),
        Command::Report(a) => report(a),
        Command::Validate(a) => validate(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn write(dir: &Path, rel: &str, body: &str) -> Result<PathBuf> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn write_json<T: serde::Serialize + ?Sized>(dir: &Path, rel: &str, value: &T) -> Result<PathBuf> {
    let body = serde_json::to_string_pretty(value).map_err(percept_core::Error::from)? + "\n";
    write(dir, rel, &body)
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(percept_core::Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn read_split(path: &Path) -> Result<Split> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text).map_err(percept_core::Error::from)?)
}

fn annotations_only(path: &Path) -> Result<Dataset> {
    let (clips, votes) = load_annotations(path)?;
    Ok(Dataset::new(clips, votes, Vec::new())?)
}

fn ingest(a: IngestArgs) -> Result<()> {
    let ds = load_dataset(&a.annotations, a.features.as_deref())?;
    let split = split_train_test(&ds, a.train_fraction, a.split_seed)?;
    let table = agreement_table(&ds);
    let out = a.out.dir();

    println!(
        "{} clips, {} vote records, feature dim {}",
        ds.len(),
        ds.votes().len(),
        ds.feature_dim().map_or("-".to_owned(), |d| d.to_string())
    );
    println!("train {} / test {}", split.train.len(), split.test.len());
    println!("agreement with intended emotion (%):");
    for (m, row) in &table.rows {
        let cells: Vec<String> = row
            .per_emotion
            .iter()
            .map(|(e, v)| format!("{}={:.1}", e.code(), 100.0 * v))
            .collect();
        println!("  {m:<10} {} all={:.1}", cells.join(" "), 100.0 * row.all);
    }
    write_json(&out, "split.json", &split)?;
    write_json(&out, "agreement.json", &table)?;
    Ok(())
}

fn parse_profile(s: &str) -> Result<AmbiguityProfile> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "all_clear_match" => Ok(AmbiguityProfile::AllClearMatch),
        "uniform" => Ok(AmbiguityProfile::Uniform),
        "table2_shaped" => Ok(AmbiguityProfile::Table2Shaped),
        _ => Err(CliError::Validation(format!("unknown profile {s:?}"))),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => SynthConfig::default(),
    };
    if let Some(n) = a.n_clips {
        cfg.n_clips = n;
    }
    if let Some(n) = a.n_actors {
        cfg.n_actors = n;
    }
    if let Some(d) = a.feature_dim {
        cfg.feature_dim = d;
    }
    if let Some(p) = &a.profile {
        cfg.profile = parse_profile(p)?;
    }
    cfg.validate()?;
    let ds = synth_generate(&cfg, a.seed)?;
    let out = a.out.dir();
    let ann = out.join("data/annotations.csv");
    let feat = out.join("data/features.bin");
    fs::create_dir_all(out.join("data")).map_err(|e| io_err(&out, e))?;
    write_annotations(&ann, &ds)?;
    write_features(&feat, &ds)?;
    let counts = category_counts(&ds, cfg.modality, &RuleParams::default())?;
    println!(
        "{} clips -> {}, {}",
        ds.len(),
        ann.display(),
        feat.display()
    );
    println!("categories (default rules): {}", fmt_counts(&counts));
    Ok(())
}

fn fmt_counts(counts: &[usize; 4]) -> String {
    DifficultyCategory::ALL
        .iter()
        .map(|c| format!("{c}={}", counts[c.index()]))
        .collect::<Vec<_>>()
        .join(" ")
}

fn score(a: ScoreArgs) -> Result<()> {
    let ds = annotations_only(&a.annotations)?;
    let scores = score_clips(&ds, ds.clip_ids(), a.method, a.modality)?;
    let name = match a.method {
        ScoreMethod::IntendedEmotion => "intended",
        ScoreMethod::Entropy => "entropy",
    };
    let path = write(
        &a.out.dir(),
        &format!("difficulty/{name}.csv"),
        &scores_csv(&scores),
    )?;
    println!("{} {} scores -> {}", scores.len(), a.method, path.display());
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let ds = annotations_only(&a.annotations)?;
    let params = RuleParams {
        majority_threshold: a.majority_threshold,
        multi_vote_min: a.multi_vote_min,
    };
    if !(params.majority_threshold > 0.0 && params.majority_threshold < 1.0) {
        return Err(CliError::Validation(
            "majority threshold must lie in (0, 1)".into(),
        ));
    }
    let cats = classify_clips(&ds, ds.clip_ids(), a.modality, &params)?;
    let path = write(
        &a.out.dir(),
        "difficulty/categories.csv",
        &categories_csv(&cats),
    )?;
    let counts = category_counts(&ds, a.modality, &params)?;
    println!("{}", fmt_counts(&counts));
    println!("{} categories -> {}", cats.len(), path.display());

    if let Some(target) = a.calibrate {
        let thresholds: Vec<f64> = (10..=19).map(|k| k as f64 * 0.05).collect();
        let mins: Vec<u32> = (1..=5).collect();
        let cal = calibrate_rule(&ds, a.modality, target, &thresholds, &mins)?;
        println!(
            "calibration: majority_threshold={} multi_vote_min={} counts {} (L1 distance {}{})",
            cal.params.majority_threshold,
            cal.params.multi_vote_min,
            fmt_counts(&cal.counts),
            cal.distance,
            if cal.exact() { ", exact" } else { "" }
        );
        write_json(&a.out.dir(), "difficulty/calibration.json", &cal)?;
    }
    Ok(())
}

fn curriculum(a: CurriculumArgs) -> Result<()> {
    let difficulty = a
        .difficulty
        .as_deref()
        .map(read_difficulty_csv)
        .transpose()?;
    let train = match (&a.split, &difficulty) {
        (Some(p), _) => read_split(p)?.train,
        (None, Some(d)) => d.clip_ids(),
        (None, None) => return Err(CliError::Validation("need --split or --difficulty".into())),
    };
    let out = a.out.dir();
    if a.strategy == Strategy::Random {
        if a.seeds.is_empty() {
            return Err(CliError::Validation(
                "the random curriculum needs --seeds".into(),
            ));
        }
        for &seed in &a.seeds {
            let m = build_manifest(a.strategy, &train, difficulty.as_ref(), Some(seed))?;
            let path = write_json(&out, &format!("manifests/random/seed_{seed}.json"), &m)?;
            println!("bins {:?} -> {}", m.bins.sizes(), path.display());
        }
    } else {
        let m = build_manifest(a.strategy, &train, difficulty.as_ref(), None)?;
        let path = write_json(&out, &format!("manifests/{}.json", a.strategy), &m)?;
        println!("bins {:?} -> {}", m.bins.sizes(), path.display());
    }
    Ok(())
}

fn cost(a: CostArgs) -> Result<()> {
    let m = CurriculumManifest::load(&a.manifest)?;
    let plan = build_stages(&m, &a.epochs, a.batch_size)?;
    let report = updates_cl(&plan);
    println!("{report}");
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(percept_core::Error::from)?
    );
    write_json(&a.out.dir(), &format!("cost/{}.json", m.strategy), &report)?;
    Ok(())
}

fn load_manifests(path: &Path, seeds: &[u64]) -> Result<BTreeMap<u64, CurriculumManifest>> {
    let mut out = BTreeMap::new();
    for &seed in seeds {
        let file = if path.is_dir() {
            path.join(format!("seed_{seed}.json"))
        } else {
            path.to_owned()
        };
        out.insert(seed, CurriculumManifest::load(&file)?);
    }
    Ok(out)
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => TrainConfig::default(),
    };
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(e) = a.epochs {
        cfg.epochs_per_stage = e;
    }
    if a.eval_every.is_some() {
        cfg.eval_every = a.eval_every;
    }
    cfg.validate()?;

    let ds = load_dataset(&a.annotations, Some(&a.features))?;
    let split = read_split(&a.split)?;
    let manifests = load_manifests(&a.manifest, &a.seeds)?;
    let train_set = split.train_set();
    for m in manifests.values() {
        let v = m.violations(Some(&train_set));
        if !v.is_empty() {
            print_violations(&v);
            return Err(CliError::Violations(v));
        }
    }
    let strategy = manifests
        .values()
        .next()
        .expect("seeds are required")
        .strategy;
    let results = run_trials(&ds, &split, &cfg, &a.seeds, |seed| {
        build_stages(&manifests[&seed], &cfg.epochs_per_stage, cfg.batch_size)
    })?;
    let out = a.out.dir();
    for t in &results {
        let path = write_json(&out, &format!("trials/{strategy}/seed_{}.json", t.seed), t)?;
        println!(
            "seed {}: accuracy {:.4} after {} updates -> {}",
            t.seed,
            t.final_accuracy,
            t.total_updates,
            path.display()
        );
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let trials = load_trials(&a.trials)?;
    if trials.is_empty() {
        return Err(CliError::Validation("no trial files found".into()));
    }
    let summary = aggregate(&trials, a.baseline)?;
    let out = a.out.dir();
    let table = summary_csv(&summary);
    write_json(&out, "report/summary.json", &summary)?;
    write(&out, "report/summary.csv", &table)?;
    write(&out, "report/curve.csv", &curve_csv(&trials)?)?;
    write(&out, "report/curve.svg", &curve_svg(&trials, &a.title)?)?;
    print!("{table}");
    Ok(())
}

fn print_violations(v: &[String]) {
    for line in v {
        println!("violation: {line}");
    }
}

fn validate(a: ValidateArgs) -> Result<()> {
    let m = CurriculumManifest::load(&a.manifest)?;
    let train = a
        .split
        .as_deref()
        .map(read_split)
        .transpose()?
        .map(|s| s.train_set());
    let violations = m.violations(train.as_ref());

    let sizes = m.bins.sizes();
    println!("manifest {} ({})", m.name, m.strategy);
    println!(
        "bin sizes: easy={} borderline_easy={} borderline_tough={} tough={}",
        sizes[0], sizes[1], sizes[2], sizes[3]
    );
    if violations.is_empty() {
        let cumulative: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        println!("batch_size  updates_cl  updates_noncl  reduction");
        for &b in &a.batch_sizes {
            if b == 0 {
                return Err(CliError::Validation("batch sizes must be positive".into()));
            }
            let report = if m.strategy == Strategy::None {
                updates_cl(&build_stages(&m, &a.epochs, b)?)
            } else {
                updates_for_sizes(&cumulative, &a.epochs, b)
            };
            println!(
                "{:>10}  {:>10}  {:>13}  {:>8.1}%",
                b,
                report.updates_cl,
                report.updates_noncl,
                100.0 * report.reduction
            );
        }
    }
    if violations.is_empty() {
        println!("ok");
        Ok(())
    } else {
        print_violations(&violations);
        Err(CliError::Violations(violations))
    }
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg: RunConfig = read_toml(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    cfg.resolve_paths(base);
    if let Some(s) = a.strategies {
        cfg.strategies = s;
    }
    if let Some(s) = a.seeds {
        cfg.trial_seeds = s;
    }
    if let Some(m) = a.modality {
        cfg.modality = m;
    }
    cfg.validate()?;
    let out = resolve_out(a.out, cfg.output_dir.clone());
    let outcome = run_pipeline(&cfg, &out)?;
    print!("{}", summary_csv(&outcome.summary));
    println!(
        "{}",
        json!({ "output_dir": out, "artifacts": outcome.manifest.artifacts.len() })
    );
    Ok(())
}
