use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{Example, Model};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Coordinates to probe; all of them when the model is smaller.
    pub coords: usize,
    /// Denominator floor for the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            coords: 256,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_coord: usize,
    pub checked: usize,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Compares analytic gradients with central finite differences on a sample
/// of parameter coordinates. Parameters are restored afterwards.
pub fn gradient_check(
    model: &mut dyn Model,
    batch: &[Example<'_>],
    opts: GradCheckOptions,
) -> GradCheck {
    let (_, analytic) = model.loss_and_gradients(batch);
    let n = model.n_params();
    let coords: Vec<usize> = if n <= opts.coords {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut idx = sample(&mut rng, n, opts.coords).into_vec();
        idx.sort_unstable();
        idx
    };

    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_coord: 0,
        checked: coords.len(),
    };
    for &i in &coords {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + opts.step;
        let (plus, _) = model.loss_and_gradients(batch);
        model.params_mut()[i] = orig - opts.step;
        let (minus, _) = model.loss_and_gradients(batch);
        model.params_mut()[i] = orig;

        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
        if rel > worst.max_rel_error {
            worst.max_rel_error = rel;
            worst.worst_coord = i;
        }
    }
    worst
}
