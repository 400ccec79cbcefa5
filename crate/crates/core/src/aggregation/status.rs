use serde::{Deserialize, Serialize};

use super::VoteMatrix;
use crate::model::{Label, SentenceAggregate, SentenceId, StatusFlags};

/// Inclusive biased-ratio band that marks a sentence as controversial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Band {
    fn default() -> Self {
        Self { lo: 0.4, hi: 0.6 }
    }
}

impl Band {
    pub fn contains(&self, ratio: f64) -> bool {
        self.lo <= ratio && ratio <= self.hi
    }
}

/// Tallies and status flags for one sentence.
///
/// Below `min_votes` only `insufficient` is set. Otherwise a strict majority
/// is `decided` (and sets the final label), an exact 50/50 split is
/// `undecided`, and a biased ratio inside `band` is `controversial`.
pub fn aggregate_sentence(
    sentence_id: SentenceId,
    votes_biased: u32,
    votes_not_biased: u32,
    min_votes: u32,
    band: Band,
) -> SentenceAggregate {
    let total = votes_biased + votes_not_biased;
    let biased_ratio = (total > 0).then(|| f64::from(votes_biased) / f64::from(total));
    let mut status = StatusFlags::default();
    let mut final_label = None;
    if total < min_votes {
        status.insufficient = true;
    } else {
        let ratio = biased_ratio.expect("total >= min_votes >= 1");
        status.decided = votes_biased != votes_not_biased;
        status.undecided = votes_biased == votes_not_biased;
        status.controversial = band.contains(ratio);
        if status.decided {
            final_label = Some(if votes_biased > votes_not_biased {
                Label::Biased
            } else {
                Label::NotBiased
            });
        }
    }
    SentenceAggregate {
        sentence_id,
        votes_biased,
        votes_not_biased,
        total,
        biased_ratio,
        status,
        final_label,
    }
}

/// One aggregate per unit of `matrix`, in unit order.
pub fn aggregate_all(matrix: &VoteMatrix, min_votes: u32, band: Band) -> Vec<SentenceAggregate> {
    matrix
        .unit_counts()
        .into_iter()
        .zip(matrix.units())
        .map(|([b, n], id)| aggregate_sentence(id.clone(), b, n, min_votes, band))
        .collect()
}

/// Sentences that most need feedback: controversial first, then fewest
/// votes, then position. `aggregates` must be in sentence index order.
pub fn sparkle_priorities(aggregates: &[SentenceAggregate], k: usize) -> Vec<SentenceId> {
    let mut ranked: Vec<(usize, &SentenceAggregate)> = aggregates.iter().enumerate().collect();
    ranked.sort_by_key(|(index, a)| (!a.status.controversial, a.total, *index));
    ranked.into_iter().take(k).map(|(_, a)| a.sentence_id.clone()).collect()
}
