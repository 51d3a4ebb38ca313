//! Seeded synthetic vote/feature generator for desk-scale experiments.
//!
//! Generative recipe, per clip `i`:
//!
//! 1. `actor = i % n_actors`, `intended = ALL[(i / n_actors) % 6]`, so every
//!    (actor, intended) group is populated once `n_clips >= 6 * n_actors`.
//! 2. A target category is drawn from the profile (quota-allocated with a
//!    largest-remainder rule, then shuffled), and `N` raters' votes are
//!    placed so that the default rule classifier reproduces that category.
//! 3. Each emotion `e` has a fixed Gaussian class mean `mu_e`. The clip's
//!    latent vector is `sum_e p_e * mu_e + noise`, where `p_e` are the vote
//!    proportions and the noise standard deviation is
//!    `noise_floor + noise_scale * (1 - p_intended)`. Frames are the latent
//!    vector plus independent per-frame noise.
//!
//! Clips with a high intended-vote share therefore sit close to their
//! intended class mean, and ambiguous or mismatched clips drift towards the
//! perceived emotions with more spread.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Clip, Dataset, Emotion, FeatureSequence, Modality, VoteRecord};
use crate::difficulty::DifficultyCategory;
use crate::error::{Error, Result};

/// Category proportions of the full CREMA-D audio votes.
pub const TABLE2_COUNTS: [u32; 4] = [3099, 3699, 464, 180];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguityProfile {
    /// Every vote lands on the intended emotion.
    AllClearMatch,
    /// Votes spread evenly over all six emotions (`N` a multiple of 6).
    Uniform,
    /// Category mixture with the (3099, 3699, 464, 180) proportions.
    Table2Shaped,
    /// Category mixture in ClearMatch, ClearMismatch, AmbiguousMatch,
    /// AmbiguousMismatch order; weights need not sum to one.
    Categories([f64; 4]),
}

impl AmbiguityProfile {
    fn weights(&self) -> Option<[f64; 4]> {
        match self {
            AmbiguityProfile::Table2Shaped => Some(TABLE2_COUNTS.map(f64::from)),
            AmbiguityProfile::Categories(w) => Some(*w),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_clips: usize,
    pub n_actors: usize,
    pub raters_min: u32,
    pub raters_max: u32,
    pub profile: AmbiguityProfile,
    pub modality: Modality,
    pub feature_dim: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    /// Standard deviation of the class-mean entries.
    pub class_separation: f64,
    pub noise_floor: f64,
    pub noise_scale: f64,
    pub frame_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_clips: 600,
            n_actors: 10,
            raters_min: 8,
            raters_max: 12,
            profile: AmbiguityProfile::Table2Shaped,
            modality: Modality::Audio,
            feature_dim: 130,
            frames_min: 10,
            frames_max: 30,
            class_separation: 1.0,
            noise_floor: 0.3,
            noise_scale: 2.0,
            frame_noise: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.n_clips == 0 {
            return bad("n_clips must be >= 1".into());
        }
        if self.n_actors == 0 {
            return bad("n_actors must be >= 1".into());
        }
        if self.raters_min < 1 || self.raters_max > 50 || self.raters_min > self.raters_max {
            return bad(format!(
                "rater range [{}, {}] must lie within [1, 50]",
                self.raters_min, self.raters_max
            ));
        }
        if self.feature_dim == 0 || self.frames_min == 0 || self.frames_min > self.frames_max {
            return bad("feature_dim and frame range must be positive and ordered".into());
        }
        for (name, v) in [
            ("class_separation", self.class_separation),
            ("noise_floor", self.noise_floor),
            ("noise_scale", self.noise_scale),
            ("frame_noise", self.frame_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        match &self.profile {
            AmbiguityProfile::Uniform => {
                if self.uniform_totals().is_empty() {
                    return bad(
                        "uniform profile needs a multiple of 6 inside the rater range".into(),
                    );
                }
            }
            AmbiguityProfile::AllClearMatch => {}
            p => {
                let w = p.weights().expect("mixture profile");
                if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                    return bad("category weights must be non-negative with a positive sum".into());
                }
                if w[2] > 0.0 && self.raters_min < 4 {
                    return bad("AmbiguousMatch clips need at least 4 raters".into());
                }
                if w[3] > 0.0 && self.raters_min < 2 {
                    return bad("AmbiguousMismatch clips need at least 2 raters".into());
                }
            }
        }
        Ok(())
    }

    fn uniform_totals(&self) -> Vec<u32> {
        (self.raters_min..=self.raters_max)
            .filter(|n| n % 6 == 0)
            .collect()
    }
}

/// Largest-remainder allocation of `n` items to `weights`.
fn allocate(weights: &[f64; 4], n: usize) -> [usize; 4] {
    let sum: f64 = weights.iter().sum();
    let exact = weights.map(|w| w / sum * n as f64);
    let mut counts = exact.map(|x| x.floor() as usize);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = n - counts.iter().sum::<usize>();
    for &k in order.iter().take(short) {
        counts[k] += 1;
    }
    counts
}

pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;

    let mut vote_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut feat_rng = ChaCha8Rng::seed_from_u64(seed);
    feat_rng.set_stream(1);

    let categories: Vec<Option<DifficultyCategory>> = match config.profile.weights() {
        Some(w) => {
            let quota = allocate(&w, config.n_clips);
            let mut cats: Vec<Option<DifficultyCategory>> = DifficultyCategory::ALL
                .iter()
                .zip(quota)
                .flat_map(|(&c, q)| std::iter::repeat_n(Some(c), q))
                .collect();
            cats.shuffle(&mut vote_rng);
            cats
        }
        None => vec![None; config.n_clips],
    };

    let class_means: Vec<Vec<f64>> = {
        let normal = Normal::new(0.0, config.class_separation.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::config(e.to_string()))?;
        Emotion::ALL
            .iter()
            .map(|_| {
                (0..config.feature_dim)
                    .map(|_| normal.sample(&mut feat_rng))
                    .collect()
            })
            .collect()
    };

    let uniform_totals = config.uniform_totals();
    let mut clips = Vec::with_capacity(config.n_clips);
    let mut votes = Vec::with_capacity(config.n_clips);
    let mut features = Vec::with_capacity(config.n_clips);

    for (i, category) in categories.into_iter().enumerate() {
        let actor = i % config.n_actors;
        let intended = Emotion::ALL[(i / config.n_actors) % Emotion::COUNT];
        let sentence = (i / (Emotion::COUNT * config.n_actors)) % 12;
        let clip_id = format!("A{actor:03}_S{sentence:02}_{intended}_{i:05}");

        let counts = match (&config.profile, category) {
            (AmbiguityProfile::AllClearMatch, _) => {
                let n = vote_rng.random_range(config.raters_min..=config.raters_max);
                let mut c = [0u32; Emotion::COUNT];
                c[intended.index()] = n;
                c
            }
            (AmbiguityProfile::Uniform, _) => {
                let n = *uniform_totals
                    .choose(&mut vote_rng)
                    .expect("validated non-empty");
                [n / 6; Emotion::COUNT]
            }
            (_, Some(cat)) => {
                let n = vote_rng.random_range(config.raters_min..=config.raters_max);
                votes_for_category(cat, intended, n, &mut vote_rng)
            }
            (_, None) => unreachable!("mixture profiles always assign a category"),
        };

        let vote = VoteRecord::new(clip_id.clone(), config.modality, counts)?;
        features.push(clip_features(
            &clip_id,
            &vote,
            intended,
            &class_means,
            config,
            &mut feat_rng,
        )?);
        votes.push(vote);
        clips.push(Clip {
            clip_id,
            actor_id: format!("A{actor:03}"),
            sentence_id: format!("S{sentence:02}"),
            intended,
        });
    }

    Dataset::new(clips, votes, features)
}

/// Places `n` votes so that the default rule (strict majority, two-vote
/// minimum for an ambiguous match) yields `category`.
fn votes_for_category(
    category: DifficultyCategory,
    intended: Emotion,
    n: u32,
    rng: &mut ChaCha8Rng,
) -> [u32; Emotion::COUNT] {
    let mut counts = [0u32; Emotion::COUNT];
    let half = n / 2;
    let others: Vec<Emotion> = Emotion::ALL
        .into_iter()
        .filter(|&e| e != intended)
        .collect();
    match category {
        DifficultyCategory::ClearMatch => {
            let m = rng.random_range(half + 1..=n);
            counts[intended.index()] = m;
            scatter(&mut counts, n - m, &others, n, rng);
        }
        DifficultyCategory::ClearMismatch => {
            let winner = *others.choose(rng).expect("five others");
            let m = rng.random_range(half + 1..=n);
            counts[winner.index()] = m;
            let rest: Vec<Emotion> = Emotion::ALL.into_iter().filter(|&e| e != winner).collect();
            scatter(&mut counts, n - m, &rest, n, rng);
        }
        DifficultyCategory::AmbiguousMatch => {
            let k = rng.random_range(2..=half);
            counts[intended.index()] = k;
            spread_without_majority(&mut counts, n - k, &others, half, rng);
        }
        DifficultyCategory::AmbiguousMismatch => {
            let k = rng.random_range(0..=1u32);
            counts[intended.index()] = k;
            spread_without_majority(&mut counts, n - k, &others, half, rng);
        }
    }
    counts
}

/// Drops `votes` one at a time on random emotions from `pool`, never letting
/// a count exceed `cap`.
fn scatter(counts: &mut [u32; 6], votes: u32, pool: &[Emotion], cap: u32, rng: &mut ChaCha8Rng) {
    for _ in 0..votes {
        let open: Vec<Emotion> = pool
            .iter()
            .copied()
            .filter(|e| counts[e.index()] < cap)
            .collect();
        let e = open.choose(rng).expect("vote placement is feasible");
        counts[e.index()] += 1;
    }
}

/// Either a bimodal split (one strong competitor) or a near-uniform spread.
fn spread_without_majority(
    counts: &mut [u32; 6],
    votes: u32,
    pool: &[Emotion],
    cap: u32,
    rng: &mut ChaCha8Rng,
) {
    let mut remaining = votes;
    if remaining > 0 && rng.random_bool(0.5) {
        let partner = *pool.choose(rng).expect("non-empty pool");
        let max = cap.min(remaining);
        let lo = remaining.div_ceil(2).min(max);
        let give = rng.random_range(lo..=max);
        counts[partner.index()] += give;
        remaining -= give;
    }
    scatter(counts, remaining, pool, cap, rng);
}

fn clip_features(
    clip_id: &str,
    vote: &VoteRecord,
    intended: Emotion,
    class_means: &[Vec<f64>],
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FeatureSequence> {
    let n = f64::from(vote.total());
    let dim = config.feature_dim;
    let mut center = vec![0.0; dim];
    for e in Emotion::ALL {
        let p = f64::from(vote.count(e)) / n;
        if p > 0.0 {
            for (c, m) in center.iter_mut().zip(&class_means[e.index()]) {
                *c += p * m;
            }
        }
    }
    let p_intended = f64::from(vote.count(intended)) / n;
    let sigma = config.noise_floor + config.noise_scale * (1.0 - p_intended);
    for c in center.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *c += sigma * z;
    }

    let frames = rng.random_range(config.frames_min..=config.frames_max);
    let mut data = Vec::with_capacity(frames * dim);
    for _ in 0..frames {
        for &c in &center {
            let z: f64 = StandardNormal.sample(rng);
            data.push(c + config.frame_noise * z);
        }
    }
    FeatureSequence::new(clip_id, frames, dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::difficulty::{classify_rule, score_entropy, RuleParams};

    fn small(profile: AmbiguityProfile) -> SynthConfig {
        SynthConfig {
            n_clips: 240,
            n_actors: 4,
            profile,
            feature_dim: 8,
            frames_min: 2,
            frames_max: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn all_clear_match_is_unanimous() {
        let ds = synth_generate(&small(AmbiguityProfile::AllClearMatch), 5).unwrap();
        for clip in ds.clips() {
            let v = ds.vote(&clip.clip_id, Modality::Audio).unwrap();
            assert_eq!(v.count(clip.intended), v.total());
            assert_eq!(
                classify_rule(v, clip.intended, &RuleParams::default()),
                DifficultyCategory::ClearMatch
            );
        }
    }

    #[test]
    fn uniform_profile_hits_max_entropy() {
        let ds = synth_generate(&small(AmbiguityProfile::Uniform), 5).unwrap();
        for v in ds.votes() {
            assert_eq!(v.total() % 6, 0);
            assert!((score_entropy(v).value - 6f64.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn mixture_categories_are_realised_exactly() {
        let cfg = small(AmbiguityProfile::Categories([1.0, 1.0, 1.0, 1.0]));
        let ds = synth_generate(&cfg, 9).unwrap();
        let mut seen = [0usize; 4];
        for clip in ds.clips() {
            let v = ds.vote(&clip.clip_id, Modality::Audio).unwrap();
            let cat = classify_rule(v, clip.intended, &RuleParams::default());
            seen[cat.index()] += 1;
        }
        assert_eq!(seen, [60, 60, 60, 60]);
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = small(AmbiguityProfile::Table2Shaped);
        let a = synth_generate(&cfg, 1).unwrap();
        let b = synth_generate(&cfg, 1).unwrap();
        assert_eq!(a.votes(), b.votes());
        assert_eq!(a.features(), b.features());
        let c = synth_generate(&cfg, 2).unwrap();
        assert_ne!(a.votes(), c.votes());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = small(AmbiguityProfile::Table2Shaped);
        cfg.n_clips = 0;
        assert!(synth_generate(&cfg, 0).is_err());

        let mut cfg = small(AmbiguityProfile::Table2Shaped);
        cfg.raters_max = 51;
        assert!(synth_generate(&cfg, 0).is_err());

        let mut cfg = small(AmbiguityProfile::Table2Shaped);
        cfg.raters_min = 3;
        assert!(synth_generate(&cfg, 0).is_err());

        let mut cfg = small(AmbiguityProfile::Uniform);
        cfg.raters_min = 7;
        cfg.raters_max = 11;
        assert!(synth_generate(&cfg, 0).is_err());

        let cfg = small(AmbiguityProfile::Categories([0.0; 4]));
        assert!(synth_generate(&cfg, 0).is_err());
    }

    #[test]
    fn allocation_is_exact() {
        assert_eq!(allocate(&[1.0, 1.0, 1.0, 1.0], 10), [3, 3, 2, 2]);
        let t2 = TABLE2_COUNTS.map(f64::from);
        assert_eq!(allocate(&t2, 7442), [3099, 3699, 464, 180]);
    }
}
