//! Agreement with an expert reference: confusion counts, F1 and percent agreement.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::model::{ExpertAgreement, Label, SentenceId};

/// Expert labels by sentence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpertLabelSet {
    pub labels: BTreeMap<SentenceId, Label>,
    #[serde(default)]
    pub provenance: String,
}

impl ExpertLabelSet {
    /// Reads a CSV with a sentence id column and a label column.
    pub fn from_csv<R: Read>(
        reader: R,
        sentence_column: &str,
        label_column: &str,
        provenance: impl Into<String>,
    ) -> Result<Self, MetricsError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r.headers().map_err(|e| MetricsError::Input(e.to_string()))?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| MetricsError::Input(format!("expert file has no column {name:?}")))
        };
        let (sc, lc) = (find(sentence_column)?, find(label_column)?);
        let mut labels = BTreeMap::new();
        for (line, row) in r.records().enumerate() {
            let row = row.map_err(|e| MetricsError::Input(e.to_string()))?;
            let label = Label::parse(&row[lc])
                .ok_or_else(|| MetricsError::Input(format!("row {}: bad label {:?}", line + 2, &row[lc])))?;
            labels.insert(SentenceId::from(&row[sc]), label);
        }
        Ok(Self {
            labels,
            provenance: provenance.into(),
        })
    }
}

/// Biased is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, predicted: Label, truth: Label) {
        match (predicted, truth) {
            (Label::Biased, Label::Biased) => self.tp += 1,
            (Label::Biased, Label::NotBiased) => self.fp += 1,
            (Label::NotBiased, Label::Biased) => self.fn_ += 1,
            (Label::NotBiased, Label::NotBiased) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `2 * precision * recall / (precision + recall)`; 0 when both are 0.
pub fn f1_score(counts: &ConfusionCounts) -> Result<f64, MetricsError> {
    if counts.tp + counts.fp + counts.fn_ == 0 {
        return Err(MetricsError::F1Undefined);
    }
    let precision = if counts.tp + counts.fp == 0 {
        0.0
    } else {
        counts.tp as f64 / (counts.tp + counts.fp) as f64
    };
    let recall = if counts.tp + counts.fn_ == 0 {
        0.0
    } else {
        counts.tp as f64 / (counts.tp + counts.fn_) as f64
    };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Compares aggregated labels (prediction) with expert labels (truth) on
/// the sentences both cover. With `quote_filter`, sentences in `quotes` are
/// left out first.
pub fn agreement_vs_experts(
    final_labels: &BTreeMap<SentenceId, Label>,
    experts: &ExpertLabelSet,
    quote_filter: bool,
    quotes: &HashSet<SentenceId>,
) -> Result<ExpertAgreement, MetricsError> {
    let mut confusion = ConfusionCounts::default();
    for (id, &label) in final_labels {
        if quote_filter && quotes.contains(id) {
            continue;
        }
        if let Some(&truth) = experts.labels.get(id) {
            confusion.add(label, truth);
        }
    }
    let n = confusion.total();
    if n == 0 {
        return Err(MetricsError::EmptyOverlap);
    }
    let agree = confusion.tp + confusion.tn;
    Ok(ExpertAgreement {
        percent_agree: 100.0 * agree as f64 / n as f64,
        n_compared: n as usize,
        n_agree: agree as usize,
        tp: confusion.tp,
        fp: confusion.fp,
        fn_: confusion.fn_,
        tn: confusion.tn,
    })
}

impl From<&ExpertAgreement> for ConfusionCounts {
    fn from(a: &ExpertAgreement) -> Self {
        Self {
            tp: a.tp,
            fp: a.fp,
            fn_: a.fn_,
            tn: a.tn,
        }
    }
}
