use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{label_slot, VoteMatrix};
use crate::model::SessionId;
use crate::stats::percentile;

/// Reliability of one annotator against the leave-one-out majority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorReliability {
    /// `|sensitivity + specificity - 1|`, or 1 when the annotator cannot be scored.
    pub score: f64,
    /// False when the annotator had too few cells or no usable reference units.
    pub scored: bool,
    pub cells: usize,
    /// Units with a strict majority among the other annotators.
    pub scorable_units: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specificity: Option<f64>,
    /// Share of scorable units where the annotator matched the reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement_rate: Option<f64>,
}

impl AnnotatorReliability {
    fn unscored(cells: usize, scorable_units: usize, agreement_rate: Option<f64>) -> Self {
        Self {
            score: 1.0,
            scored: false,
            cells,
            scorable_units,
            sensitivity: None,
            specificity: None,
            agreement_rate,
        }
    }
}

/// Scores every annotator of `matrix`.
///
/// For each unit an annotator labeled, the reference label is the strict
/// majority of all *other* annotators on that unit; units with no other votes
/// or a tie are skipped. Sensitivity and specificity are measured against
/// those references (biased is the positive class). Annotators with fewer
/// than `min_votes` cells, or without reference units of both classes, get
/// score 1 and are never removed by the percentile rule.
pub fn spammer_scores(matrix: &VoteMatrix, min_votes: usize) -> BTreeMap<SessionId, AnnotatorReliability> {
    let unit_counts = matrix.unit_counts();
    let cell_counts = matrix.annotator_cell_counts();
    // [reference][given] tallies per annotator.
    let mut confusion = vec![[[0usize; 2]; 2]; matrix.annotators().len()];
    for (u, a, label) in matrix.cells() {
        let mut others = unit_counts[u];
        others[label_slot(label)] -= 1;
        if others[0] == others[1] {
            continue;
        }
        let reference = if others[0] > others[1] { 0 } else { 1 };
        confusion[a][reference][label_slot(label)] += 1;
    }

    matrix
        .annotators()
        .iter()
        .enumerate()
        .map(|(a, id)| {
            let c = confusion[a];
            let cells = cell_counts[a];
            let scorable = c[0][0] + c[0][1] + c[1][0] + c[1][1];
            let agreement = (scorable > 0).then(|| (c[0][0] + c[1][1]) as f64 / scorable as f64);
            let positives = c[0][0] + c[0][1];
            let negatives = c[1][0] + c[1][1];
            let reliability = if cells < min_votes {
                AnnotatorReliability::unscored(cells, scorable, None)
            } else if positives == 0 || negatives == 0 {
                AnnotatorReliability::unscored(cells, scorable, agreement)
            } else {
                let sensitivity = c[0][0] as f64 / positives as f64;
                let specificity = c[1][1] as f64 / negatives as f64;
                AnnotatorReliability {
                    score: (sensitivity + specificity - 1.0).abs(),
                    scored: true,
                    cells,
                    scorable_units: scorable,
                    sensitivity: Some(sensitivity),
                    specificity: Some(specificity),
                    agreement_rate: agreement,
                }
            };
            (id.clone(), reliability)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpamFilterOutcome {
    /// Removed annotators, sorted by id.
    pub excluded: Vec<SessionId>,
    pub removed_votes: usize,
    /// Score at the configured percentile; `None` when nothing was scored or
    /// every scored annotator has the same score.
    pub threshold: Option<f64>,
    pub matrix: VoteMatrix,
}

/// Removes annotators whose score is at or below the `percentile`-th
/// percentile of the scored annotators, and annotators whose agreement rate
/// with the leave-one-out majority is below `agreement_floor`.
///
/// A flat score distribution removes nobody by the percentile rule.
pub fn filter_spammers(
    scores: &BTreeMap<SessionId, AnnotatorReliability>,
    matrix: &VoteMatrix,
    percentile_p: f64,
    agreement_floor: f64,
) -> SpamFilterOutcome {
    let scored: Vec<f64> = scores.values().filter(|r| r.scored).map(|r| r.score).collect();
    let flat = scored.iter().all(|&s| s == scored[0]);
    let threshold = if scored.is_empty() || flat {
        None
    } else {
        percentile(&scored, percentile_p)
    };

    let excluded: Vec<SessionId> = scores
        .iter()
        .filter(|(_, r)| {
            let by_score = r.scored && threshold.is_some_and(|t| r.score <= t);
            let by_agreement = r.agreement_rate.is_some_and(|rate| rate < agreement_floor);
            by_score || by_agreement
        })
        .map(|(id, _)| id.clone())
        .collect();
    let removed: HashSet<SessionId> = excluded.iter().cloned().collect();
    let filtered = matrix.without_annotators(&removed);
    SpamFilterOutcome {
        removed_votes: matrix.n_cells() - filtered.n_cells(),
        excluded,
        threshold,
        matrix: filtered,
    }
}
