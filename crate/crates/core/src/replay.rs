//! Loading offline annotation dumps for replay through the pipeline.

use std::collections::HashSet;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};
use thiserror::Error;

use crate::classifier::Classifier;
use crate::config::ReplayColumns;
use crate::ingest::{article_files, build_article, read_doc, RawArticleDoc};
use crate::metrics::ExpertLabelSet;
use crate::model::{Article, FeedbackEvent, Label, Mechanism, SentenceId, SessionId, Verdict};

/// Paths of one replay bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayBundle {
    /// A directory of raw article JSON documents, or one JSON file holding an
    /// array of labeled articles or raw documents.
    pub articles: PathBuf,
    pub annotations: PathBuf,
    pub experts: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: {count} annotation rows reference unknown sentences (first: {first})")]
    UnknownSentences { path: PathBuf, count: usize, first: String },
}

impl ReplayError {
    fn io(path: &Path, e: impl ToString) -> Self {
        ReplayError::Io {
            path: path.to_owned(),
            message: e.to_string(),
        }
    }

    fn schema(path: &Path, message: impl Into<String>) -> Self {
        ReplayError::Schema {
            path: path.to_owned(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayData {
    pub articles: Vec<Article>,
    pub events: Vec<FeedbackEvent>,
    pub experts: Option<ExpertLabelSet>,
}

impl ReplayBundle {
    pub fn load(&self, columns: &ReplayColumns, classifier: &dyn Classifier) -> Result<ReplayData, ReplayError> {
        for path in std::iter::once(&self.articles)
            .chain(std::iter::once(&self.annotations))
            .chain(self.experts.iter())
        {
            if !path.exists() {
                return Err(ReplayError::io(path, "no such file or directory"));
            }
        }
        let articles = load_articles(&self.articles, classifier)?;
        let known: HashSet<&SentenceId> = articles
            .iter()
            .flat_map(|a| a.sentences.iter().map(|s| &s.sentence_id))
            .collect();
        let events = load_annotations(&self.annotations, columns)?;
        let unknown: Vec<&FeedbackEvent> = events.iter().filter(|e| !known.contains(&e.sentence_id)).collect();
        if let Some(first) = unknown.first() {
            return Err(ReplayError::UnknownSentences {
                path: self.annotations.clone(),
                count: unknown.len(),
                first: first.sentence_id.to_string(),
            });
        }
        let experts = match &self.experts {
            Some(path) => {
                let file = File::open(path).map_err(|e| ReplayError::io(path, e))?;
                let set = ExpertLabelSet::from_csv(
                    file,
                    &columns.expert_sentence,
                    &columns.expert_label,
                    path.display().to_string(),
                )
                .map_err(|e| ReplayError::schema(path, e.to_string()))?;
                Some(set)
            }
            None => None,
        };
        Ok(ReplayData {
            articles,
            events,
            experts,
        })
    }
}

/// Articles from a directory of raw documents (labeled with `classifier`) or
/// from a JSON array file.
pub fn load_articles(path: &Path, classifier: &dyn Classifier) -> Result<Vec<Article>, ReplayError> {
    if path.is_dir() {
        let files = article_files(path).map_err(|e| ReplayError::io(path, e))?;
        if files.is_empty() {
            return Err(ReplayError::schema(path, "directory holds no *.json article files"));
        }
        return files
            .iter()
            .map(|f| {
                let doc = read_doc(f).map_err(|e| ReplayError::schema(f, e.to_string()))?;
                build_article(&doc, classifier).map_err(|e| ReplayError::schema(f, e.to_string()))
            })
            .collect();
    }
    let text = std::fs::read_to_string(path).map_err(|e| ReplayError::io(path, e))?;
    if let Ok(articles) = serde_json::from_str::<Vec<Article>>(&text) {
        return Ok(articles);
    }
    let docs: Vec<RawArticleDoc> = serde_json::from_str(&text)
        .map_err(|e| ReplayError::schema(path, format!("neither labeled articles nor raw documents: {e}")))?;
    docs.iter()
        .map(|d| build_article(d, classifier).map_err(|e| ReplayError::schema(path, e.to_string())))
        .collect()
}

/// Accepts RFC 3339, `YYYY-MM-DD HH:MM:SS` (taken as UTC) and Unix seconds.
pub fn parse_timestamp(value: &str) -> Option<DateTime<Utc>> {
    let value = value.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(value) {
        return Some(t.with_timezone(&Utc));
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(value, "%Y-%m-%d %H:%M:%S") {
        return Some(t.and_utc());
    }
    value.parse::<i64>().ok().and_then(|s| DateTime::from_timestamp(s, 0))
}

/// Reads the annotation CSV into feedback events.
///
/// A row carries either a direct label (recorded as a control-style answer)
/// or a verdict on the shown label (recorded as a highlights answer). Event
/// ids follow timestamp order, ties broken by row order.
pub fn load_annotations(path: &Path, columns: &ReplayColumns) -> Result<Vec<FeedbackEvent>, ReplayError> {
    let file = File::open(path).map_err(|e| ReplayError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| ReplayError::schema(path, e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let mut missing = Vec::new();
    let mut require = |name: &str| {
        let pos = find(name);
        if pos.is_none() {
            missing.push(name.to_owned());
        }
        pos
    };
    let session = require(&columns.session);
    let sentence = require(&columns.sentence);
    let timestamp = require(&columns.timestamp);
    let label = find(&columns.label);
    let verdict = find(&columns.verdict);
    if label.is_none() && verdict.is_none() {
        missing.push(format!("{} or {}", columns.label, columns.verdict));
    }
    if !missing.is_empty() {
        let found: Vec<&str> = headers.iter().collect();
        return Err(ReplayError::schema(
            path,
            format!("missing column(s) {}; found {}", missing.join(", "), found.join(", ")),
        ));
    }
    let (session, sentence, timestamp) = (session.unwrap(), sentence.unwrap(), timestamp.unwrap());

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| ReplayError::schema(path, e.to_string()))?;
        let cell = |pos: Option<usize>| pos.and_then(|p| record.get(p)).filter(|v| !v.is_empty());
        let created_at = parse_timestamp(&record[timestamp])
            .ok_or_else(|| ReplayError::schema(path, format!("line {line}: bad timestamp {:?}", &record[timestamp])))?;
        let (mechanism, verdict_value, label_value) = match (cell(verdict), cell(label)) {
            (Some(v), None) => {
                let v = Verdict::parse(v)
                    .ok_or_else(|| ReplayError::schema(path, format!("line {line}: bad verdict {v:?}")))?;
                (Mechanism::Highlights, Some(v), None)
            }
            (None, Some(l)) => {
                let l = Label::parse(l)
                    .ok_or_else(|| ReplayError::schema(path, format!("line {line}: bad label {l:?}")))?;
                (Mechanism::Control, None, Some(l))
            }
            _ => {
                return Err(ReplayError::schema(
                    path,
                    format!("line {line}: exactly one of {} and {} must be filled", columns.label, columns.verdict),
                ))
            }
        };
        rows.push(FeedbackEvent {
            event_id: 0,
            session_id: SessionId::from(&record[session]),
            sentence_id: SentenceId::from(&record[sentence]),
            mechanism,
            verdict: verdict_value,
            direct_label: label_value,
            reason: None,
            created_at,
        });
    }
    // Stable sort keeps file order among equal timestamps.
    rows.sort_by_key(|e| e.created_at);
    for (i, e) in rows.iter_mut().enumerate() {
        e.event_id = i as u64 + 1;
    }
    Ok(rows)
}
