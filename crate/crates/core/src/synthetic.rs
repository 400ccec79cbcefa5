//! Seeded synthetic vote matrices with a latent true label per unit.
//!
//! Used for calibration comparisons and statistical smoke tests.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregation::VoteMatrix;
use crate::metrics::krippendorff_alpha;
use crate::model::{Label, SentenceId, SessionId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentClassSpec {
    pub units: usize,
    /// Annotator pool size.
    pub annotators: usize,
    /// Labels per unit, drawn from distinct annotators.
    pub votes_per_unit: usize,
    /// Share of units whose true label is biased.
    pub prevalence: f64,
    /// Probability that a single label matches the truth.
    pub accuracy: f64,
}

/// Generates a matrix. The same seed reuses the same underlying uniforms, so
/// alpha moves smoothly with `accuracy` for a fixed seed.
pub fn latent_class_matrix(spec: &LatentClassSpec, seed: u64) -> VoteMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let units: Vec<SentenceId> = (0..spec.units).map(|i| SentenceId::from(format!("syn-u{i:05}"))).collect();
    let sessions: Vec<SessionId> = (0..spec.annotators).map(|i| SessionId::from(format!("syn-a{i:03}"))).collect();
    let mut matrix = VoteMatrix::new(units, sessions);
    for u in 0..spec.units {
        let truth = if rng.random::<f64>() < spec.prevalence { Label::Biased } else { Label::NotBiased };
        for a in sample(&mut rng, spec.annotators, spec.votes_per_unit.min(spec.annotators)) {
            let label = if rng.random::<f64>() < spec.accuracy { truth } else { truth.opposite() };
            matrix.insert(u, a, label);
        }
    }
    matrix
}

/// Bisects on accuracy until alpha of the generated matrix is within
/// `tolerance` of `target` (or the search interval collapses). Returns the
/// matrix and the accuracy used.
pub fn calibrated_matrix(mut spec: LatentClassSpec, target: f64, tolerance: f64, seed: u64) -> (VoteMatrix, f64) {
    let (mut lo, mut hi) = (0.5, 1.0);
    let mut best: Option<(f64, VoteMatrix, f64)> = None;
    for _ in 0..60 {
        spec.accuracy = (lo + hi) / 2.0;
        let m = latent_class_matrix(&spec, seed);
        let alpha = krippendorff_alpha(&m).map(|a| a.value).unwrap_or(f64::NAN);
        let gap = (alpha - target).abs();
        if best.as_ref().is_none_or(|(g, _, _)| gap < *g) {
            best = Some((gap, m, spec.accuracy));
        }
        if gap <= tolerance {
            break;
        }
        if alpha < target {
            lo = spec.accuracy;
        } else {
            hi = spec.accuracy;
        }
    }
    let (_, m, accuracy) = best.expect("at least one iteration");
    (m, accuracy)
}
