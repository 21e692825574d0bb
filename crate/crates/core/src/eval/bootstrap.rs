use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::roc::auroc;
use crate::error::{Error, Result};
use crate::seed;
use crate::stats::{mean, quantile_sorted, sample_variance};

pub const DEFAULT_BOOTSTRAPS: usize = 1000;

/// Upper bound on draws per replicate before giving up on finding a
/// resample that contains both classes.
const MAX_DRAWS_PER_REPLICATE: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub n_bootstrap: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Resamples discarded for containing a single class.
    pub redrawn: usize,
    pub aurocs: Vec<f64>,
}

/// Draws one valid resample for replicate `b`. Returns the indices and the
/// number of single-class draws that were discarded first.
pub fn bootstrap_indices(labels: &[bool], seed: u64, b: usize) -> Result<(Vec<usize>, usize)> {
    let n = labels.len();
    let mut rng = seed::rng(seed, b as u64);
    for attempt in 0..MAX_DRAWS_PER_REPLICATE {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let pos = idx.iter().filter(|&&i| labels[i]).count();
        if pos > 0 && pos < n {
            return Ok((idx, attempt));
        }
    }
    Err(Error::Stats(format!(
        "no two-class resample found in {MAX_DRAWS_PER_REPLICATE} draws"
    )))
}

/// Patient-level bootstrap of the AUROC: `n` resamples of the full size
/// with replacement, each on its own sub-seed. Resamples holding a single
/// class are redrawn so exactly `n` AUROCs enter the summary; the interval
/// is the 2.5th to 97.5th percentile.
pub fn bootstrap_ci(values: &[f64], labels: &[bool], n: usize, seed: u64) -> Result<BootstrapSummary> {
    // validates input and class presence
    auroc(values, labels)?;
    if n == 0 {
        return Err(Error::Config("bootstrap needs at least one resample".into()));
    }
    let draws: Vec<(f64, usize)> = (0..n)
        .into_par_iter()
        .map(|b| {
            let (idx, redrawn) = bootstrap_indices(labels, seed, b)?;
            let v: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
            let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            Ok((auroc(&v, &l)?, redrawn))
        })
        .collect::<Result<_>>()?;
    let aurocs: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let mut sorted = aurocs.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapSummary {
        n_bootstrap: n,
        mean: mean(&aurocs),
        sd: if n > 1 { sample_variance(&aurocs).sqrt() } else { 0.0 },
        ci_low: quantile_sorted(&sorted, 0.025),
        ci_high: quantile_sorted(&sorted, 0.975),
        redrawn: draws.iter().map(|d| d.1).sum(),
        aurocs,
    })
}
