//! Closed-form bounds, random merge instances, and Monte Carlo checks of
//! the occupancy and conflict-probability estimates.
//!
//! Bound evaluators are generic over [`num_traits::Float`]; asymptotic
//! expressions are evaluated with constant 1 and meant for ratios.

mod bounds;
mod conflict;
mod occupancy;

pub use bounds::{
    emulation_cost_bound, funnel_conflict_bound, funnel_conflict_expect, funnel_miss_scale,
    sort_lower_bound_multilevel, sort_lower_bound_single, transpose_scan_bound, BoundInputs,
    LevelParams, SortBoundVariant,
};
pub use conflict::{
    conflict_bound_eval, conflict_experiment, cyclic_control, monte_carlo_e1,
    random_merge_instance, round_robin_instance, ConflictBound, ConflictExperiment, MergeInstance,
};
pub use occupancy::{monte_carlo_occupancy, occupancy_expect, occupancy_expect_exact};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::AlgoError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("degenerate bound: {0}")]
    Degenerate(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Algo(#[from] AlgoError),
}

/// Monte Carlo estimate with its standard error (sample std / √trials).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub estimate: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

impl McResult {
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        McResult {
            estimate: mean,
            stderr: (var / n).sqrt(),
            trials: samples.len() as u64,
            seed,
        }
    }

    /// `|estimate − target| / stderr`; 0 when both sides agree exactly.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.estimate - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

const CHUNK: u64 = 1024;

/// Runs `trials` independent draws in parallel. Chunk `c` uses stream `c`
/// of a ChaCha8 generator seeded with `seed`, so results do not depend on
/// the thread count.
pub(crate) fn par_trials<F>(trials: u64, seed: u64, f: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let n = CHUNK.min(trials - c * CHUNK);
            (0..n).map(|_| f(&mut rng)).collect::<Vec<_>>()
        })
        .collect()
}
