use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{AnalysisError, Result};
use crate::forge::stream_rng;
use crate::repsim::pearson;

pub const DEFAULT_PERMUTATIONS: usize = 9_999;
const MIN_PERMUTATIONS: usize = 100;
const BLOCK: usize = 256;

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(pearson(x, y)?)
}

/// Two-sided permutation p-value for the Pearson correlation of `x` and
/// `y`: `(1 + #{|r_perm| >= |r_obs|}) / (n_perm + 1)`, shuffling `y`.
/// Blocks of permutations draw from their own seeded stream, so the result
/// does not depend on the thread count.
pub fn permutation_p(x: &[f64], y: &[f64], n_perm: usize, seed: u64) -> Result<(f64, f64)> {
    if n_perm < MIN_PERMUTATIONS {
        return Err(AnalysisError::TooFewPermutations(n_perm));
    }
    let r_obs = pearson_r(x, y)?;
    let cut = r_obs.abs() * (1.0 - 1e-12);
    let n_blocks = n_perm.div_ceil(BLOCK);
    let hits: usize = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let mut shuffled = y.to_vec();
            let todo = BLOCK.min(n_perm - b * BLOCK);
            let mut count = 0;
            for _ in 0..todo {
                shuffled.shuffle(&mut rng);
                // a shuffle of a non-constant vector stays non-constant
                let r = pearson(x, &shuffled).unwrap_or(0.0);
                if r.abs() >= cut {
                    count += 1;
                }
            }
            count
        })
        .sum();
    Ok((r_obs, (1 + hits) as f64 / (n_perm + 1) as f64))
}
