//! From the raw feedback log to effective votes, filtered tallies, sentence
//! statuses and the exportable dataset.

mod export;
mod spam;
mod status;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{FeedbackEvent, Label, SentenceId, SessionId, Validate, Vote};

pub use export::{export_dataset, read_csv, read_jsonl, write_csv, write_jsonl, CSV_HEADER};
pub use spam::{filter_spammers, spammer_scores, AnnotatorReliability, SpamFilterOutcome};
pub use status::{aggregate_all, aggregate_sentence, sparkle_priorities, Band};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggregationError {
    #[error("event {event_id}: {message}")]
    Mismatch { event_id: u64, message: String },
    #[error("vote matrix cell references unknown {what} {id}")]
    UnknownReference { what: &'static str, id: String },
    #[error("duplicate cell for annotator {annotator} on unit {unit}")]
    DuplicateCell { annotator: String, unit: String },
}

/// Label a feedback event stands for, given the label that was shown.
///
/// Anchored events carry a verdict: agree keeps the shown label, disagree
/// flips it. Unanchored events carry the reader's label directly.
pub fn resolve_effective_label(shown_label: Label, event: &FeedbackEvent) -> Result<Label, AggregationError> {
    let mismatch = |message: &str| AggregationError::Mismatch {
        event_id: event.event_id,
        message: message.to_owned(),
    };
    match (event.mechanism.is_anchored(), event.verdict, event.direct_label) {
        (true, Some(crate::model::Verdict::Agree), None) => Ok(shown_label),
        (true, Some(crate::model::Verdict::Disagree), None) => Ok(shown_label.opposite()),
        (false, None, Some(label)) => Ok(label),
        (true, _, _) => Err(mismatch("anchored mechanism requires a verdict and no direct label")),
        (false, _, _) => Err(mismatch("unanchored mechanism requires a direct label and no verdict")),
    }
}

/// Rater-by-unit label matrix with at most one cell per pair.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VoteMatrix {
    units: Vec<SentenceId>,
    annotators: Vec<SessionId>,
    /// Keyed by (unit index, annotator index).
    cells: BTreeMap<(usize, usize), Label>,
}

impl VoteMatrix {
    pub fn new(units: Vec<SentenceId>, annotators: Vec<SessionId>) -> Self {
        Self {
            units,
            annotators,
            cells: BTreeMap::new(),
        }
    }

    /// Builds a matrix from `(annotator, unit, label)` triples. Units keep the
    /// order of `units`; annotators are sorted by id. Later triples for the
    /// same pair overwrite earlier ones.
    pub fn from_triples<'a>(
        units: &[SentenceId],
        triples: impl IntoIterator<Item = (&'a SessionId, &'a SentenceId, Label)>,
    ) -> Result<Self, AggregationError> {
        let unit_index: HashMap<&SentenceId, usize> = units.iter().enumerate().map(|(i, u)| (u, i)).collect();
        let triples: Vec<_> = triples.into_iter().collect();
        let annotators: Vec<SessionId> = triples
            .iter()
            .map(|(a, _, _)| (*a).clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let ann_index: HashMap<SessionId, usize> =
            annotators.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
        let mut m = Self::new(units.to_vec(), annotators);
        for (a, u, label) in triples {
            let ui = *unit_index.get(u).ok_or_else(|| AggregationError::UnknownReference {
                what: "unit",
                id: u.to_string(),
            })?;
            m.cells.insert((ui, ann_index[a]), label);
        }
        Ok(m)
    }

    pub fn units(&self) -> &[SentenceId] {
        &self.units
    }

    pub fn annotators(&self) -> &[SessionId] {
        &self.annotators
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, unit: usize, annotator: usize) -> Option<Label> {
        self.cells.get(&(unit, annotator)).copied()
    }

    pub fn insert(&mut self, unit: usize, annotator: usize, label: Label) {
        assert!(unit < self.units.len() && annotator < self.annotators.len());
        self.cells.insert((unit, annotator), label);
    }

    /// `(unit, annotator, label)` in unit-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, Label)> + '_ {
        self.cells.iter().map(|(&(u, a), &l)| (u, a, l))
    }

    /// Cells of one unit as `(annotator, label)`.
    pub fn unit_cells(&self, unit: usize) -> impl Iterator<Item = (usize, Label)> + '_ {
        self.cells
            .range((unit, 0)..(unit + 1, 0))
            .map(|(&(_, a), &l)| (a, l))
    }

    /// `[biased, not_biased]` tallies for every unit, in unit order.
    pub fn unit_counts(&self) -> Vec<[u32; 2]> {
        let mut counts = vec![[0u32; 2]; self.units.len()];
        for (&(u, _), &l) in &self.cells {
            counts[u][label_slot(l)] += 1;
        }
        counts
    }

    /// Number of cells per annotator, in annotator order.
    pub fn annotator_cell_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.annotators.len()];
        for &(_, a) in self.cells.keys() {
            counts[a] += 1;
        }
        counts
    }

    /// Copy without any cell from the given annotators. The annotator list
    /// is kept so indices stay comparable.
    pub fn without_annotators(&self, removed: &HashSet<SessionId>) -> Self {
        let drop: HashSet<usize> = self
            .annotators
            .iter()
            .enumerate()
            .filter(|(_, a)| removed.contains(*a))
            .map(|(i, _)| i)
            .collect();
        Self {
            units: self.units.clone(),
            annotators: self.annotators.clone(),
            cells: self
                .cells
                .iter()
                .filter(|((_, a), _)| !drop.contains(a))
                .map(|(&k, &v)| (k, v))
                .collect(),
        }
    }

    /// Copy keeping only the listed `(unit, annotator)` cells.
    pub fn with_cells(&self, keep: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let cells = keep
            .into_iter()
            .filter_map(|k| self.cells.get(&k).map(|&l| (k, l)))
            .collect();
        Self {
            units: self.units.clone(),
            annotators: self.annotators.clone(),
            cells,
        }
    }

    /// Relabels annotators through `rename` and reorders units by `unit_order`
    /// (a permutation of unit indices). Used to check invariance properties.
    pub fn permuted(&self, unit_order: &[usize], rename: impl Fn(&SessionId) -> SessionId) -> Self {
        let triples: Vec<(SessionId, SentenceId, Label)> = self
            .cells()
            .map(|(u, a, l)| (rename(&self.annotators[a]), self.units[u].clone(), l))
            .collect();
        let units: Vec<SentenceId> = unit_order.iter().map(|&old| self.units[old].clone()).collect();
        Self::from_triples(&units, triples.iter().map(|(a, u, l)| (a, u, *l)))
            .expect("permutation keeps every unit")
    }
}

pub(crate) fn label_slot(label: Label) -> usize {
    match label {
        Label::Biased => 0,
        Label::NotBiased => 1,
    }
}

#[derive(Serialize, Deserialize)]
struct WireCell {
    annotator: SessionId,
    unit: SentenceId,
    label: Label,
}

#[derive(Serialize, Deserialize)]
struct WireMatrix {
    units: Vec<SentenceId>,
    annotators: Vec<SessionId>,
    cells: Vec<WireCell>,
}

impl Serialize for VoteMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        WireMatrix {
            units: self.units.clone(),
            annotators: self.annotators.clone(),
            cells: self
                .cells()
                .map(|(u, a, label)| WireCell {
                    annotator: self.annotators[a].clone(),
                    unit: self.units[u].clone(),
                    label,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for VoteMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = WireMatrix::deserialize(deserializer)?;
        VoteMatrix::try_from(wire).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<WireMatrix> for VoteMatrix {
    type Error = AggregationError;

    fn try_from(wire: WireMatrix) -> Result<Self, Self::Error> {
        let unit_index: HashMap<&SentenceId, usize> = wire.units.iter().enumerate().map(|(i, u)| (u, i)).collect();
        let ann_index: HashMap<&SessionId, usize> = wire.annotators.iter().enumerate().map(|(i, a)| (a, i)).collect();
        let mut cells = BTreeMap::new();
        for c in &wire.cells {
            let u = *unit_index.get(&c.unit).ok_or_else(|| AggregationError::UnknownReference {
                what: "unit",
                id: c.unit.to_string(),
            })?;
            let a = *ann_index.get(&c.annotator).ok_or_else(|| AggregationError::UnknownReference {
                what: "annotator",
                id: c.annotator.to_string(),
            })?;
            if cells.insert((u, a), c.label).is_some() {
                return Err(AggregationError::DuplicateCell {
                    annotator: c.annotator.to_string(),
                    unit: c.unit.to_string(),
                });
            }
        }
        Ok(Self {
            units: wire.units,
            annotators: wire.annotators,
            cells,
        })
    }
}

/// Result of [`fold_votes`].
#[derive(Debug, Clone, Default)]
pub struct FoldOutcome {
    pub matrix: VoteMatrix,
    /// Effective votes, ordered by (session, sentence).
    pub votes: Vec<Vote>,
    /// Events naming a sentence that is not in the unit list.
    pub unknown_sentence_events: Vec<u64>,
    /// Events whose payload does not fit their mechanism.
    pub invalid_events: Vec<(u64, String)>,
    /// Events dropped because their session is excluded.
    pub excluded_events: usize,
}

/// Folds an event log into one effective vote per (session, sentence).
///
/// The event with the highest `event_id` for a pair wins. Events from
/// `excluded` sessions contribute nothing; events naming unknown sentences or
/// with inconsistent payloads are skipped and reported.
pub fn fold_votes(
    events: &[FeedbackEvent],
    units: &[SentenceId],
    shown_labels: &HashMap<SentenceId, Label>,
    excluded: &HashSet<SessionId>,
) -> FoldOutcome {
    let mut ordered: Vec<&FeedbackEvent> = events.iter().collect();
    ordered.sort_by_key(|e| e.event_id);

    let known: HashSet<&SentenceId> = units.iter().collect();
    let mut outcome = FoldOutcome::default();
    let mut latest: BTreeMap<(SessionId, SentenceId), Vote> = BTreeMap::new();
    for event in ordered {
        if excluded.contains(&event.session_id) {
            outcome.excluded_events += 1;
            continue;
        }
        let shown = match shown_labels.get(&event.sentence_id) {
            Some(&shown) if known.contains(&event.sentence_id) => shown,
            _ => {
                outcome.unknown_sentence_events.push(event.event_id);
                continue;
            }
        };
        if let Some(v) = event.validate().into_iter().find(|v| v.field != "reason") {
            outcome.invalid_events.push((event.event_id, v.to_string()));
            continue;
        }
        match resolve_effective_label(shown, event) {
            Ok(label) => {
                latest.insert(
                    (event.session_id.clone(), event.sentence_id.clone()),
                    Vote {
                        session_id: event.session_id.clone(),
                        sentence_id: event.sentence_id.clone(),
                        effective_label: label,
                        derived_from: event.event_id,
                    },
                );
            }
            Err(err) => outcome.invalid_events.push((event.event_id, err.to_string())),
        }
    }
    outcome.matrix = VoteMatrix::from_triples(
        units,
        latest.values().map(|v| (&v.session_id, &v.sentence_id, v.effective_label)),
    )
    .expect("votes only reference known units");
    outcome.votes = latest.into_values().collect();
    outcome
}
