use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::themes::{ConvergenceInput, ConvergenceMode, ThemeLexicon};
use crate::error::{Error, Result};
use crate::record::TrialRecord;

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PermutationConfig {
    pub permutations: usize,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            permutations: DEFAULT_PERMUTATIONS,
            seed: 0x5eed,
        }
    }
}

/// The generator for permutation `index`: the config seed, on stream `index`.
///
/// Each permutation draws from its own stream, so results do not depend on
/// how the loop is scheduled across threads.
pub fn permutation_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `(1 + #{permuted >= observed}) / (1 + permutations)`.
///
/// `regenerate` recomputes the statistic under one random relabelling.
pub fn permutation_test<F>(observed: f64, regenerate: F, config: PermutationConfig) -> Result<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    if config.permutations == 0 {
        return Err(Error::Domain("permutation count must be positive".into()));
    }
    if observed.is_nan() {
        return Err(Error::Domain("observed statistic is NaN".into()));
    }
    let exceed = (0..config.permutations)
        .into_par_iter()
        .filter(|&i| regenerate(&mut permutation_rng(config.seed, i)) >= observed)
        .count();
    Ok((1 + exceed) as f64 / (1 + config.permutations) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceTest {
    pub observed: f64,
    pub p_value: f64,
    pub permutations: usize,
}

/// Permutation test for cross-model theme convergence.
///
/// Within each model, the `(stimulus, rep)` labels of its loss declarations
/// are shuffled and the mean pairwise Jaccard statistic is recomputed.
pub fn convergence_permutation_test(
    records: &[TrialRecord],
    lexicon: &ThemeLexicon,
    mode: ConvergenceMode,
    config: PermutationConfig,
) -> Result<ConvergenceTest> {
    let input = ConvergenceInput::from_records(records, lexicon);
    if input.models.len() < 2 {
        return Err(Error::Domain("convergence needs at least 2 models".into()));
    }
    let identity = input.identity_labels();
    let observed = input.statistic(&identity, mode);
    let groups: Vec<Vec<usize>> = (0..input.models.len())
        .map(|m| {
            input
                .units
                .iter()
                .enumerate()
                .filter(|(_, u)| u.model == m)
                .map(|(idx, _)| idx)
                .collect()
        })
        .collect();
    let p_value = permutation_test(
        observed,
        |rng| {
            let mut labels = identity.clone();
            for idx in &groups {
                let mut mine: Vec<(usize, u32)> = idx.iter().map(|&i| identity[i]).collect();
                mine.shuffle(rng);
                for (&i, label) in idx.iter().zip(mine) {
                    labels[i] = label;
                }
            }
            input.statistic(&labels, mode)
        },
        config,
    )?;
    Ok(ConvergenceTest {
        observed,
        p_value,
        permutations: config.permutations,
    })
}
