//! Sampling the follower's walk directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::protocol::verification::TOLERANCE_GUARD;

use super::analysis::RandomWalkModel;
use super::matrix::TransitionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub trials: usize,
    pub passes: usize,
    pub rate: f64,
    /// Binomial standard error `sqrt(p(1-p)/n)`.
    pub std_error: f64,
}

impl MonteCarloEstimate {
    pub fn from_counts(passes: usize, trials: usize) -> Self {
        let rate = if trials == 0 {
            0.0
        } else {
            passes as f64 / trials as f64
        };
        let std_error = if trials == 0 {
            0.0
        } else {
            (rate * (1.0 - rate) / trials as f64).sqrt()
        };
        Self {
            trials,
            passes,
            rate,
            std_error,
        }
    }

    /// Whether `value` lies within `k` standard errors of the rate. With
    /// zero observed passes or all passes the standard error vanishes, so
    /// the one-count resolution `1/trials` is used as a floor.
    pub fn consistent_with(&self, value: f64, k: f64) -> bool {
        let se = self.std_error.max(1.0 / self.trials.max(1) as f64);
        (self.rate - value).abs() <= k * se
    }
}

/// Draws next states from a transition matrix using per-row cumulative
/// tables over the non-zero entries.
#[derive(Debug, Clone)]
pub struct WalkSampler {
    rows: Vec<Vec<(usize, f64)>>,
}

impl WalkSampler {
    pub fn new(p: &TransitionMatrix) -> Self {
        let rows = (0..p.n())
            .map(|i| {
                let mut acc = 0.0;
                p.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v > 0.0)
                    .map(|(j, v)| {
                        acc += v;
                        (j, acc)
                    })
                    .collect()
            })
            .collect();
        Self { rows }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        let row = &self.rows[state];
        let u: f64 = rng.random::<f64>() * row.last().map_or(1.0, |l| l.1);
        row.iter()
            .find(|(_, c)| u < *c)
            .unwrap_or(row.last().expect("non-empty row"))
            .0
    }

    pub fn uniform_start<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.rows.len())
    }
}

/// Per-trial generator output: for each challenge, the checkpoint distance
/// and the walk steps elapsing since the previous deadline.
pub type ChallengeDraw = Vec<(f64, usize)>;

/// RNG for trial `trial` of a run seeded with `seed`: a dedicated ChaCha
/// stream, so results do not depend on scheduling.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Fraction of independent episodes in which the walk is within γ of every
/// drawn checkpoint at its deadline.
pub fn simulate_random_walk_follower<G>(
    model: &RandomWalkModel,
    p: &TransitionMatrix,
    generator: G,
    gamma: f64,
    trials: usize,
    seed: u64,
) -> MonteCarloEstimate
where
    G: Fn(&mut ChaCha8Rng) -> ChallengeDraw + Sync,
{
    let sampler = WalkSampler::new(p);
    let passes = (0..trials as u64)
        .into_par_iter()
        .filter(|&trial| {
            let mut rng = trial_rng(seed, trial);
            let draw = generator(&mut rng);
            let mut x = sampler.uniform_start(&mut rng);
            draw.iter().all(|&(checkpoint, steps)| {
                for _ in 0..steps {
                    x = sampler.step(x, &mut rng);
                }
                (model.distance(x) - checkpoint).abs() <= gamma + TOLERANCE_GUARD
            })
        })
        .count();
    MonteCarloEstimate::from_counts(passes, trials)
}

/// Generator drawing K checkpoints uniformly from `checkpoints`, each
/// followed by a fixed number of steps.
pub fn uniform_draws(checkpoints: Vec<f64>, steps: Vec<usize>) -> impl Fn(&mut ChaCha8Rng) -> ChallengeDraw + Sync {
    move |rng| {
        steps
            .iter()
            .map(|&s| (checkpoints[rng.random_range(0..checkpoints.len())], s))
            .collect()
    }
}
