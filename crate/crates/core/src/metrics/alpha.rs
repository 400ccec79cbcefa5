//! Krippendorff's alpha for nominal binary labels.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::aggregation::VoteMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha {
    pub value: f64,
    /// Expected disagreement was zero (a single value everywhere); alpha is
    /// reported as 1 by convention.
    pub degenerate: bool,
    pub pairable_units: usize,
    pub pairable_values: usize,
}

/// Alpha from per-unit `[biased, not_biased]` tallies.
///
/// Units with fewer than two values cannot be paired and are dropped. With
/// the coincidence matrix `o`, marginals `n_c` and `n` pairable values,
/// `alpha = 1 - (n - 1) * sum_{c != k} o_ck / sum_{c != k} n_c * n_k`.
pub fn alpha_from_counts(counts: impl IntoIterator<Item = [u32; 2]>) -> Result<Alpha, MetricsError> {
    let mut off_diagonal = 0.0;
    let mut marginals = [0u64; 2];
    let mut pairable_units = 0;
    for [b, n] in counts {
        let m = b + n;
        if m < 2 {
            continue;
        }
        pairable_units += 1;
        off_diagonal += 2.0 * f64::from(b) * f64::from(n) / f64::from(m - 1);
        marginals[0] += u64::from(b);
        marginals[1] += u64::from(n);
    }
    if pairable_units == 0 {
        return Err(MetricsError::AlphaUndefined);
    }
    let n = (marginals[0] + marginals[1]) as f64;
    let expected = 2.0 * marginals[0] as f64 * marginals[1] as f64;
    let pairable_values = (marginals[0] + marginals[1]) as usize;
    if expected == 0.0 {
        return Ok(Alpha {
            value: 1.0,
            degenerate: true,
            pairable_units,
            pairable_values,
        });
    }
    Ok(Alpha {
        value: 1.0 - (n - 1.0) * off_diagonal / expected,
        degenerate: false,
        pairable_units,
        pairable_values,
    })
}

/// Nominal alpha over every unit of `matrix`.
pub fn krippendorff_alpha(matrix: &VoteMatrix) -> Result<Alpha, MetricsError> {
    if matrix.n_cells() < 2 {
        return Err(MetricsError::AlphaUndefined);
    }
    alpha_from_counts(matrix.unit_counts())
}
