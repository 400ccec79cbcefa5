//! Percentile bootstrap interval for alpha, resampling sentences.

use rand::Rng;

use super::alpha::alpha_from_counts;
use super::MetricsError;
use crate::aggregation::VoteMatrix;
use crate::model::ConfidenceInterval;
use crate::stats::percentile_sorted;

pub const MIN_ITERATIONS: usize = 100;

/// Draws units (sentences with at least one label) with replacement,
/// keeping each unit's full column of labels, and recomputes alpha on every
/// replicate. The interval is the `(1 - confidence) / 2` and
/// `(1 + confidence) / 2` percentiles of the replicate alphas. Replicates
/// with no pairable unit are redrawn.
pub fn bootstrap_alpha_ci<R: Rng + ?Sized>(
    matrix: &VoteMatrix,
    iterations: usize,
    confidence: f64,
    rng: &mut R,
) -> Result<ConfidenceInterval, MetricsError> {
    if iterations < MIN_ITERATIONS {
        return Err(MetricsError::Input(format!(
            "bootstrap needs at least {MIN_ITERATIONS} iterations, got {iterations}"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(MetricsError::Input(format!("confidence {confidence} not in (0, 1)")));
    }
    super::krippendorff_alpha(matrix)?;
    let units: Vec<[u32; 2]> = matrix
        .unit_counts()
        .into_iter()
        .filter(|[b, n]| b + n > 0)
        .collect();

    let mut replicates = Vec::with_capacity(iterations);
    let mut sample = vec![[0u32; 2]; units.len()];
    let max_redraws = iterations * 10;
    let mut redraws = 0;
    while replicates.len() < iterations {
        for slot in sample.iter_mut() {
            *slot = units[rng.random_range(0..units.len())];
        }
        match alpha_from_counts(sample.iter().copied()) {
            Ok(a) => replicates.push(a.value),
            Err(MetricsError::AlphaUndefined) if redraws < max_redraws => redraws += 1,
            Err(e) => return Err(e),
        }
    }
    replicates.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0 * 100.0;
    Ok(ConfidenceInterval {
        lo: percentile_sorted(&replicates, tail),
        hi: percentile_sorted(&replicates, 100.0 - tail),
        confidence,
        iterations,
    })
}
