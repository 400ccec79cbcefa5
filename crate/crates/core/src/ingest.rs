//! Raw article documents to labeled [`Article`]s.
//!
//! Segmentation is rule based and deterministic so that sentence ids stay
//! stable across re-ingests.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{assign_label, Classifier, ClassifierError};
use crate::model::{Article, ArticleId, Label, Lean, Sentence, SentenceId, Validate};

pub const BUNDLED_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

/// Share of a sentence's visible characters that must sit inside double
/// quotation marks for it to be marked as a quote.
pub const QUOTE_SHARE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawArticleDoc {
    pub title: String,
    #[serde(default)]
    pub author: Option<String>,
    pub outlet: String,
    pub source_url: String,
    pub topic: String,
    pub lean: Lean,
    #[serde(default)]
    pub published_at: Option<DateTime<Utc>>,
    pub body: String,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("article body is empty")]
    EmptyBody,
    #[error("invalid article: {0}")]
    Invalid(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("classifier returned {got} scores for {expected} sentences")]
    ScoreCount { expected: usize, got: usize },
    #[error("{source_url} is already ingested with a different body (use force to replace)")]
    Conflict { source_url: String },
    #[error("article store: {0}")]
    Store(String),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

/// Persistence seam used by [`ingest_article`].
pub trait ArticleStore {
    fn find_by_url(&self, source_url: &str) -> Option<Article>;
    /// Insert, or replace the article with the same id keeping its position.
    fn upsert(&mut self, article: Article) -> Result<(), IngestError>;
}

/// Articles in ingest order.
#[derive(Debug, Clone, Default)]
pub struct MemoryArticleStore {
    pub articles: Vec<Article>,
}

impl ArticleStore for MemoryArticleStore {
    fn find_by_url(&self, source_url: &str) -> Option<Article> {
        self.articles.iter().find(|a| a.source_url == source_url).cloned()
    }

    fn upsert(&mut self, article: Article) -> Result<(), IngestError> {
        match self.articles.iter_mut().find(|a| a.article_id == article.article_id) {
            Some(slot) => *slot = article,
            None => self.articles.push(article),
        }
        Ok(())
    }
}

fn abbreviations() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        BUNDLED_ABBREVIATIONS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_owned)
            .collect()
    })
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | '”' | '’' | ')' | ']' | '»')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '“' | '‘' | '(' | '[' | '«')
}

/// Collapses every whitespace run to a single space.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn ends_sentence(word: &str) -> bool {
    let core = word.trim_end_matches(is_closing);
    if !core.ends_with(['.', '!', '?']) {
        return false;
    }
    if core.ends_with('.') && !core.ends_with("..") {
        let stem = core.trim_end_matches('.').trim_start_matches(is_opening);
        if stem.is_empty() {
            return true;
        }
        if abbreviations().contains(stem) {
            return false;
        }
        // Initials ("J.") and dotted acronyms ("U.S.", "e.g.").
        let mut chars = stem.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if c.is_uppercase() {
                return false;
            }
        }
        if stem.contains('.') && stem.split('.').all(|p| p.chars().count() <= 2 && !p.is_empty()) {
            return false;
        }
    }
    true
}

fn starts_sentence(word: &str) -> bool {
    word.trim_start_matches(is_opening)
        .chars()
        .next()
        .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit())
}

/// Splits a body into sentences.
///
/// Blank lines are paragraph breaks and always split. Inside a paragraph a
/// word ending in `.`, `!` or `?` (optionally followed by closing quotes or
/// brackets) ends a sentence when the next word starts with an uppercase
/// letter or digit, unless the period belongs to a known abbreviation, an
/// initial or a dotted acronym. Joining the output with single spaces gives
/// back the whitespace-normalized body.
pub fn segment(body: &str) -> Result<Vec<String>, IngestError> {
    let mut sentences = Vec::new();
    for paragraph in paragraphs(body) {
        let words: Vec<&str> = paragraph.split_whitespace().collect();
        let mut start = 0;
        for i in 0..words.len() {
            let last = i + 1 == words.len();
            if last || (ends_sentence(words[i]) && starts_sentence(words[i + 1])) {
                sentences.push(words[start..=i].join(" "));
                start = i + 1;
            }
        }
    }
    if sentences.is_empty() {
        return Err(IngestError::EmptyBody);
    }
    Ok(sentences)
}

fn paragraphs(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for line in body.lines() {
        if line.trim().is_empty() {
            if !current.trim().is_empty() {
                out.push(std::mem::take(&mut current));
            }
            current.clear();
        } else {
            current.push(' ');
            current.push_str(line);
        }
    }
    if !current.trim().is_empty() {
        out.push(current);
    }
    out
}

/// Whether at least [`QUOTE_SHARE`] of the non-whitespace characters lie
/// inside double quotation marks (the marks themselves count as inside).
pub fn is_predominantly_quote(text: &str) -> bool {
    let mut inside = false;
    let mut quoted = 0usize;
    let mut total = 0usize;
    for c in text.chars() {
        if c.is_whitespace() {
            continue;
        }
        total += 1;
        match c {
            '"' => {
                quoted += 1;
                inside = !inside;
            }
            '“' => {
                quoted += 1;
                inside = true;
            }
            '”' => {
                quoted += 1;
                inside = false;
            }
            _ if inside => quoted += 1,
            _ => {}
        }
    }
    total > 0 && quoted as f64 >= QUOTE_SHARE * total as f64
}

impl RawArticleDoc {
    pub fn check(&self) -> Result<(), IngestError> {
        if normalize_whitespace(&self.body).is_empty() {
            return Err(IngestError::EmptyBody);
        }
        for (name, value) in [
            ("title", &self.title),
            ("outlet", &self.outlet),
            ("source_url", &self.source_url),
            ("topic", &self.topic),
        ] {
            if value.trim().is_empty() {
                return Err(IngestError::Invalid(format!("{name} is empty")));
            }
        }
        Ok(())
    }
}

/// Segments, classifies and labels a document without persisting it.
pub fn build_article(doc: &RawArticleDoc, classifier: &dyn Classifier) -> Result<Article, IngestError> {
    doc.check()?;
    let texts = segment(&doc.body)?;
    let scores = classifier.classify(&texts)?;
    if scores.len() != texts.len() {
        return Err(IngestError::ScoreCount {
            expected: texts.len(),
            got: scores.len(),
        });
    }
    let article_id = ArticleId::from_source_url(&doc.source_url);
    let sentences = texts
        .into_iter()
        .zip(scores)
        .enumerate()
        .map(|(index, (text, score))| Sentence {
            sentence_id: SentenceId::for_position(&doc.source_url, index),
            article_id: article_id.clone(),
            index,
            is_quote: is_predominantly_quote(&text),
            text,
            p_biased: score.p_biased,
            shown_label: assign_label(&score),
        })
        .collect();
    let article = Article {
        article_id,
        title: doc.title.trim().to_owned(),
        author: doc.author.clone(),
        outlet: doc.outlet.trim().to_owned(),
        source_url: doc.source_url.trim().to_owned(),
        topic: doc.topic.trim().to_owned(),
        lean: doc.lean,
        published_at: doc.published_at,
        sentences,
    };
    let violations = article.validate();
    if !violations.is_empty() {
        let joined: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(IngestError::Invalid(joined.join("; ")));
    }
    Ok(article)
}

/// Ingests one document into `store`.
///
/// Re-ingesting an identical document replaces the stored article in place.
/// A different body under an existing URL is a conflict unless `force` is set.
pub fn ingest_article(
    doc: &RawArticleDoc,
    classifier: &dyn Classifier,
    store: &mut dyn ArticleStore,
    force: bool,
) -> Result<Article, IngestError> {
    doc.check()?;
    if let Some(existing) = store.find_by_url(doc.source_url.trim()) {
        let stored_body: Vec<&str> = existing.sentences.iter().map(|s| s.text.as_str()).collect();
        if stored_body.join(" ") != normalize_whitespace(&doc.body) && !force {
            return Err(IngestError::Conflict {
                source_url: doc.source_url.clone(),
            });
        }
    }
    let article = build_article(doc, classifier)?;
    store.upsert(article.clone())?;
    Ok(article)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub biased: usize,
    pub not_biased: usize,
}

impl LabelCounts {
    fn add(&mut self, label: Label) {
        match label {
            Label::Biased => self.biased += 1,
            Label::NotBiased => self.not_biased += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestFailure {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub articles: usize,
    pub sentences: usize,
    pub quote_sentences: usize,
    pub labels: LabelCounts,
    pub by_lean: BTreeMap<String, LabelCounts>,
    pub by_topic: BTreeMap<String, LabelCounts>,
    pub failures: Vec<IngestFailure>,
}

impl IngestReport {
    pub fn add(&mut self, article: &Article) {
        self.articles += 1;
        for s in &article.sentences {
            self.sentences += 1;
            self.quote_sentences += usize::from(s.is_quote);
            self.labels.add(s.shown_label);
            self.by_lean.entry(article.lean.as_str().to_owned()).or_default().add(s.shown_label);
            self.by_topic.entry(article.topic.clone()).or_default().add(s.shown_label);
        }
    }

    pub fn summary(&self) -> String {
        format!("{} articles, {} sentences", self.articles, self.sentences)
    }
}

/// The `*.json` files of `dir`, sorted by file name.
pub fn article_files(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let entries = std::fs::read_dir(dir).map_err(|e| IngestError::File {
        path: dir.to_owned(),
        message: e.to_string(),
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_doc(path: &Path) -> Result<RawArticleDoc, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::File {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| IngestError::File {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

/// Ingests every `*.json` document in `dir`. Files that fail are recorded in
/// the report and do not stop the run.
pub fn ingest_dir(
    dir: &Path,
    classifier: &dyn Classifier,
    store: &mut dyn ArticleStore,
    force: bool,
) -> Result<IngestReport, IngestError> {
    let mut report = IngestReport::default();
    for path in article_files(dir)? {
        let result = read_doc(&path).and_then(|doc| ingest_article(&doc, classifier, store, force));
        match result {
            Ok(article) => report.add(&article),
            Err(err) => report.failures.push(IngestFailure {
                path: path.display().to_string(),
                error: err.to_string(),
            }),
        }
    }
    Ok(report)
}
