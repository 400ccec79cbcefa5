//! Sentence bias probabilities.
//!
//! Two sources implement [`Classifier`]: a remote HTTP service speaking a small
//! JSON protocol, and a deterministic lexicon baseline so the platform can run
//! with no model host at all. The baseline is a stand-in and makes no claim of
//! matching a fine-tuned transformer.

use std::ops::Range;
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ClassifierConfig, ClassifierMode};
use crate::model::{label_for_probability, Label};

/// Lexicon shipped with the crate.
pub const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.txt");

pub const BASELINE_MODEL_ID: &str = "lexicon-baseline-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasScore {
    pub p_biased: f64,
    pub model_id: String,
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("no texts to classify")]
    EmptyInput,
    #[error("classifier gateway failed for items {}..{}: {message}", range.start, range.end)]
    Gateway { range: Range<usize>, message: String },
    #[error("classifier returned probability {value} for item {index}, outside [0, 1]")]
    InvalidScore { index: usize, value: f64 },
    #[error("failed to load lexicon {path}: {source}")]
    Lexicon {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("classifier configuration: {0}")]
    Config(String),
}

impl ClassifierError {
    /// Gateway errors are transient; everything else will fail again.
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClassifierError::Gateway { .. })
    }
}

pub trait Classifier: Send + Sync {
    /// One score per input text, in input order.
    fn classify(&self, texts: &[String]) -> Result<Vec<BiasScore>, ClassifierError>;
}

/// Label with the higher probability; an exact tie is not biased.
pub fn assign_label(score: &BiasScore) -> Label {
    label_for_probability(score.p_biased)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Tokens are maximal runs of alphanumerics, hyphens and apostrophes, lowercased,
/// with leading/trailing hyphens and apostrophes trimmed.
fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\'' || c == '’'))
        .map(|t| t.trim_matches(|c| c == '-' || c == '\'' || c == '’'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    terms: Vec<Vec<String>>,
}

impl Lexicon {
    /// One term per line; blank lines and `#` comments are ignored.
    pub fn parse(source: &str) -> Self {
        let mut terms: Vec<Vec<String>> = source
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(tokenize)
            .filter(|t| !t.is_empty())
            .collect();
        terms.sort();
        terms.dedup();
        Self { terms }
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON)
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let source = std::fs::read_to_string(path).map_err(|source| ClassifierError::Lexicon {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::parse(&source))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Number of term occurrences in `text`, counting every matching position.
    pub fn hits(&self, text: &str) -> usize {
        let tokens = tokenize(text);
        let mut hits = 0;
        for start in 0..tokens.len() {
            for term in &self.terms {
                if tokens[start..].starts_with(term) {
                    hits += 1;
                }
            }
        }
        hits
    }
}

/// `p = logistic(w0 + w1 * hits)`.
#[derive(Debug, Clone)]
pub struct BaselineClassifier {
    lexicon: Lexicon,
    w0: f64,
    w1: f64,
}

impl Default for BaselineClassifier {
    fn default() -> Self {
        Self::new(Lexicon::bundled(), -2.0, 1.5)
    }
}

impl BaselineClassifier {
    pub fn new(lexicon: Lexicon, w0: f64, w1: f64) -> Self {
        Self { lexicon, w0, w1 }
    }

    pub fn score(&self, text: &str) -> BiasScore {
        let k = self.lexicon.hits(text) as f64;
        BiasScore {
            p_biased: logistic(self.w0 + self.w1 * k),
            model_id: BASELINE_MODEL_ID.to_owned(),
        }
    }
}

impl Classifier for BaselineClassifier {
    fn classify(&self, texts: &[String]) -> Result<Vec<BiasScore>, ClassifierError> {
        Ok(texts.iter().map(|t| self.score(t)).collect())
    }
}

#[derive(Debug, Serialize)]
struct RemoteRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct RemoteResponse {
    scores: Vec<f64>,
    model_id: String,
}

/// Client for `POST {"texts": [...]}` -> `{"scores": [...], "model_id": "..."}`.
#[derive(Debug, Clone)]
pub struct RemoteClassifier {
    endpoint: String,
    client: reqwest::blocking::Client,
    batch_size: usize,
    max_attempts: u32,
    backoff: Duration,
}

impl RemoteClassifier {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, ClassifierError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClassifierError::Config(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            client,
            batch_size: 32,
            max_attempts: 3,
            backoff: Duration::from_millis(200),
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    /// `attempts` tries per batch, sleeping `backoff * 2^n` between them.
    pub fn with_retries(mut self, attempts: u32, backoff: Duration) -> Self {
        self.max_attempts = attempts.max(1);
        self.backoff = backoff;
        self
    }

    fn call_batch(&self, texts: &[String], range: &Range<usize>) -> Result<RemoteResponse, ClassifierError> {
        let gateway = |message: String| ClassifierError::Gateway {
            range: range.clone(),
            message,
        };
        let response = self
            .client
            .post(&self.endpoint)
            .json(&RemoteRequest { texts })
            .send()
            .map_err(|e| gateway(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(gateway(format!("HTTP {status}")));
        }
        let body: RemoteResponse = response
            .json()
            .map_err(|e| gateway(format!("malformed body: {e}")))?;
        if body.scores.len() != texts.len() {
            return Err(gateway(format!(
                "malformed body: {} scores for {} texts",
                body.scores.len(),
                texts.len()
            )));
        }
        Ok(body)
    }

    fn classify_batch(&self, texts: &[String], offset: usize) -> Result<Vec<BiasScore>, ClassifierError> {
        let range = offset..offset + texts.len();
        let mut attempt = 0;
        let body = loop {
            match self.call_batch(texts, &range) {
                Ok(body) => break body,
                Err(err) => {
                    attempt += 1;
                    if attempt >= self.max_attempts {
                        return Err(err);
                    }
                    tracing::warn!(%err, attempt, "classifier batch failed, retrying");
                    thread::sleep(self.backoff * 2u32.pow(attempt - 1));
                }
            }
        };
        body.scores
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                if (0.0..=1.0).contains(&p) {
                    Ok(BiasScore {
                        p_biased: p,
                        model_id: body.model_id.clone(),
                    })
                } else {
                    Err(ClassifierError::InvalidScore {
                        index: offset + i,
                        value: p,
                    })
                }
            })
            .collect()
    }
}

impl Classifier for RemoteClassifier {
    fn classify(&self, texts: &[String]) -> Result<Vec<BiasScore>, ClassifierError> {
        if texts.is_empty() {
            return Err(ClassifierError::EmptyInput);
        }
        let mut scores = Vec::with_capacity(texts.len());
        for (n, batch) in texts.chunks(self.batch_size).enumerate() {
            scores.extend(self.classify_batch(batch, n * self.batch_size)?);
        }
        Ok(scores)
    }
}

/// Builds the classifier selected by `classifier.mode`.
pub fn from_config(config: &ClassifierConfig) -> Result<Box<dyn Classifier>, ClassifierError> {
    match config.mode {
        ClassifierMode::Baseline => {
            let lexicon = match &config.lexicon_path {
                Some(path) => Lexicon::load(path)?,
                None => Lexicon::bundled(),
            };
            Ok(Box::new(BaselineClassifier::new(lexicon, config.w0, config.w1)))
        }
        ClassifierMode::Remote => {
            let endpoint = config
                .endpoint
                .clone()
                .ok_or_else(|| ClassifierError::Config("classifier.endpoint is required in remote mode".into()))?;
            Ok(Box::new(RemoteClassifier::new(
                endpoint,
                Duration::from_millis(config.timeout_ms),
            )?))
        }
    }
}
