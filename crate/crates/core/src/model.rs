//! Shared domain types and their validators.
//!
//! Everything here is a plain value: construction and validation never touch
//! I/O, so these types can be shared freely across threads. The serde
//! encodings double as the wire and storage schemas for the rest of the
//! workspace.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Default upper bound on the free-text reason attached to feedback.
pub const DEFAULT_REASON_MAX_CHARS: usize = 500;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Self {
                Self(value.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(value: &str) -> Self {
                Self(value.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(value: String) -> Self {
                Self(value)
            }
        }
    };
}

id_newtype!(
    /// Opaque article identifier, derived from the article's source URL.
    ArticleId
);
id_newtype!(
    /// Opaque sentence identifier, derived from `(source_url, index)`.
    SentenceId
);
id_newtype!(
    /// Anonymous reader session token.
    SessionId
);

impl ArticleId {
    /// Deterministic id for an article published at `source_url`.
    pub fn from_source_url(source_url: &str) -> Self {
        let digest = Sha256::digest(source_url.trim().as_bytes());
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Self(format!("a{hex}"))
    }
}

impl SentenceId {
    /// Sentence ids are stable across re-ingests of the same URL, so existing
    /// feedback keeps pointing at the right sentence.
    pub fn for_position(source_url: &str, index: usize) -> Self {
        let article = ArticleId::from_source_url(source_url);
        Self(format!("{}-s{index:04}", article.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lean {
    Left,
    Center,
    Right,
}

impl Lean {
    pub fn as_str(self) -> &'static str {
        match self {
            Lean::Left => "left",
            Lean::Center => "center",
            Lean::Right => "right",
        }
    }
}

/// Binary sentence bias label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Biased,
    NotBiased,
}

impl Label {
    pub fn opposite(self) -> Self {
        match self {
            Label::Biased => Label::NotBiased,
            Label::NotBiased => Label::Biased,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Biased => "biased",
            Label::NotBiased => "not_biased",
        }
    }

    pub fn parse(value: &str) -> Option<Self> {
        match value.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "biased" | "1" | "true" => Some(Label::Biased),
            "not_biased" | "non_biased" | "unbiased" | "0" | "false" => Some(Label::NotBiased),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Agree,
    Disagree,
}

impl Verdict {
    pub fn parse(value: &str) -> Option<Self> {
        match value.trim().to_ascii_lowercase().as_str() {
            "agree" => Some(Verdict::Agree),
            "disagree" => Some(Verdict::Disagree),
            _ => None,
        }
    }
}

/// How a sentence was presented when feedback was given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Classifier label shown; reader agrees or disagrees.
    Highlights,
    /// First sentence of a comparison pair; label shown.
    ComparisonAnchored,
    /// Second sentence of a comparison pair; no label shown.
    ComparisonUnanchored,
    /// No labels at all; reader answers the direct question.
    Control,
}

impl Mechanism {
    /// Anchored mechanisms expect a verdict against the shown label.
    pub fn is_anchored(self) -> bool {
        matches!(self, Mechanism::Highlights | Mechanism::ComparisonAnchored)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: SentenceId,
    pub article_id: ArticleId,
    pub index: usize,
    pub text: String,
    pub p_biased: f64,
    pub shown_label: Label,
    /// Set when most of the sentence sits inside double quotation marks.
    #[serde(default)]
    pub is_quote: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: ArticleId,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    pub outlet: String,
    pub source_url: String,
    pub topic: String,
    pub lean: Lean,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_at: Option<DateTime<Utc>>,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub event_id: u64,
    pub session_id: SessionId,
    pub sentence_id: SentenceId,
    pub mechanism: Mechanism,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub created_at: DateTime<Utc>,
}

/// The effective label a session currently holds for a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub session_id: SessionId,
    pub sentence_id: SentenceId,
    pub effective_label: Label,
    pub derived_from: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentGroup {
    Highlights,
    Comparison,
    Control,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    #[default]
    None,
    Spammer,
    AttentionFail,
    TrustFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub session_id: SessionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spammer_score: Option<f64>,
    pub excluded: bool,
    pub exclusion_reason: ExclusionReason,
    pub group: ExperimentGroup,
    pub attention_failures: u32,
    pub trust_usable: bool,
}

impl AnnotatorProfile {
    pub fn new(session_id: SessionId, group: ExperimentGroup) -> Self {
        Self {
            session_id,
            spammer_score: None,
            excluded: false,
            exclusion_reason: ExclusionReason::None,
            group,
            attention_failures: 0,
            trust_usable: true,
        }
    }

    pub fn exclude(&mut self, reason: ExclusionReason) {
        self.exclusion_reason = reason;
        self.excluded = reason != ExclusionReason::None;
    }
}

/// Status flags of an aggregated sentence. `decided` and `controversial` can
/// both be set; `decided` and `undecided` never are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct StatusFlags {
    pub decided: bool,
    pub controversial: bool,
    pub undecided: bool,
    pub insufficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceAggregate {
    pub sentence_id: SentenceId,
    pub votes_biased: u32,
    pub votes_not_biased: u32,
    pub total: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biased_ratio: Option<f64>,
    pub status: StatusFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_label: Option<Label>,
}

/// BABE-style label string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelBias {
    Biased,
    #[serde(rename = "Non-biased")]
    NonBiased,
}

impl From<Label> for LabelBias {
    fn from(label: Label) -> Self {
        match label {
            Label::Biased => LabelBias::Biased,
            Label::NotBiased => LabelBias::NonBiased,
        }
    }
}

impl LabelBias {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelBias::Biased => "Biased",
            LabelBias::NonBiased => "Non-biased",
        }
    }
}

/// Tag written into the `source` column of every exported record.
pub const DATASET_SOURCE_TAG: &str = "biasfeed";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub text: String,
    pub news_link: String,
    pub outlet: String,
    pub topic: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub label_bias: LabelBias,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsReport {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub t_statistic: f64,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub f_statistic: f64,
    pub p_value: f64,
    pub n_observations: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineCounts {
    pub raw_events: usize,
    /// Cells left after latest-wins folding and study exclusions.
    pub folded_votes: usize,
    pub valid_votes: usize,
    pub removed_annotators: usize,
    pub removed_votes: usize,
    pub labeled: usize,
    pub decided: usize,
    pub controversial: usize,
    pub undecided: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub confidence: f64,
    pub iterations: usize,
}

/// Agreement of aggregated labels with an expert reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertAgreement {
    pub percent_agree: f64,
    pub n_compared: usize,
    pub n_agree: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySummary {
    pub mean: f64,
    pub sd: f64,
    pub participants: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub alpha_degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_ci: Option<ConfidenceInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1_vs_experts: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_agreement: Option<ExpertAgreement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert_agreement_without_quotes: Option<ExpertAgreement>,
    pub engagement: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_efficiency: Option<EfficiencySummary>,
    pub counts: PipelineCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<OlsReport>,
}

/// One invariant violation found by [`Validate::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks the invariants of a value built from untrusted input. Violations
/// are data: every one is reported and the value is never modified.
pub trait Validate {
    fn validate(&self) -> Vec<Violation>;

    fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

fn check_probability(field: &str, p: f64, out: &mut Vec<Violation>) {
    if !(0.0..=1.0).contains(&p) {
        out.push(Violation::new(field, "probability out of range"));
    }
}

/// Label implied by a classifier probability. Exactly 0.5 maps to not biased.
pub fn label_for_probability(p_biased: f64) -> Label {
    if p_biased > 0.5 {
        Label::Biased
    } else {
        Label::NotBiased
    }
}

impl Validate for Sentence {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_probability("p_biased", self.p_biased, &mut out);
        if self.p_biased.is_finite()
            && (0.0..=1.0).contains(&self.p_biased)
            && label_for_probability(self.p_biased) != self.shown_label
        {
            out.push(Violation::new(
                "shown_label",
                "shown_label inconsistent with p_biased",
            ));
        }
        if self.text.trim().is_empty() {
            out.push(Violation::new("text", "empty sentence text"));
        }
        out
    }
}

impl Validate for Article {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.sentences.is_empty() {
            out.push(Violation::new("sentences", "article has no sentences"));
        }
        if self.topic.trim().is_empty() {
            out.push(Violation::new("topic", "topic missing"));
        }
        let mut seen = BTreeSet::new();
        for (pos, s) in self.sentences.iter().enumerate() {
            if s.index != pos {
                out.push(Violation::new(
                    format!("sentences[{pos}].index"),
                    format!("expected index {pos}, found {}", s.index),
                ));
            }
            if !seen.insert(s.sentence_id.clone()) {
                out.push(Violation::new(
                    format!("sentences[{pos}].sentence_id"),
                    "duplicate sentence id",
                ));
            }
            if s.article_id != self.article_id {
                out.push(Violation::new(
                    format!("sentences[{pos}].article_id"),
                    "sentence belongs to another article",
                ));
            }
            for v in s.validate() {
                out.push(Violation::new(format!("sentences[{pos}].{}", v.field), v.message));
            }
        }
        out
    }
}

impl FeedbackEvent {
    pub fn validate_with_limit(&self, max_reason_chars: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        match (self.verdict, self.direct_label) {
            (Some(_), Some(_)) | (None, None) => {
                out.push(Violation::new(
                    "verdict",
                    "exactly one of verdict/direct_label must be set",
                ));
            }
            (Some(_), None) if !self.mechanism.is_anchored() => {
                out.push(Violation::new(
                    "verdict",
                    "verdict given for an unanchored mechanism",
                ));
            }
            (None, Some(_)) if self.mechanism.is_anchored() => {
                out.push(Violation::new(
                    "direct_label",
                    "direct_label given for an anchored mechanism",
                ));
            }
            _ => {}
        }
        if let Some(reason) = &self.reason {
            let len = reason.chars().count();
            if len > max_reason_chars {
                out.push(Violation::new(
                    "reason",
                    format!("reason has {len} characters, limit is {max_reason_chars}"),
                ));
            }
        }
        out
    }
}

impl Validate for FeedbackEvent {
    fn validate(&self) -> Vec<Violation> {
        self.validate_with_limit(DEFAULT_REASON_MAX_CHARS)
    }
}

impl Validate for AnnotatorProfile {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.excluded != (self.exclusion_reason != ExclusionReason::None) {
            out.push(Violation::new(
                "excluded",
                "excluded must be set iff exclusion_reason is not none",
            ));
        }
        if self.attention_failures >= 2 && self.exclusion_reason != ExclusionReason::AttentionFail {
            out.push(Violation::new(
                "exclusion_reason",
                "two attention failures require exclusion for attention_fail",
            ));
        }
        if let Some(score) = self.spammer_score {
            if !(0.0..=1.0).contains(&score) {
                out.push(Violation::new("spammer_score", "score out of range"));
            }
        }
        out
    }
}

impl Validate for SentenceAggregate {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.total != self.votes_biased + self.votes_not_biased {
            out.push(Violation::new("total", "total is not the sum of the tallies"));
        }
        match (self.total, self.biased_ratio) {
            (0, Some(_)) => out.push(Violation::new("biased_ratio", "ratio set with no votes")),
            (t, Some(r)) if t > 0 => {
                let expected = f64::from(self.votes_biased) / f64::from(t);
                if (r - expected).abs() > 1e-12 {
                    out.push(Violation::new("biased_ratio", "ratio does not match tallies"));
                }
            }
            (t, None) if t > 0 => out.push(Violation::new("biased_ratio", "ratio missing")),
            _ => {}
        }
        if self.status.decided && self.status.undecided {
            out.push(Violation::new("status", "decided and undecided are exclusive"));
        }
        if self.status.decided != self.final_label.is_some() {
            out.push(Violation::new(
                "final_label",
                "final_label must be present iff decided",
            ));
        }
        out
    }
}

impl Validate for OlsReport {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.n_observations < 3 {
            out.push(Violation::new("n_observations", "need at least 3 observations"));
        }
        if !(0.0..=1.0).contains(&self.r_squared) {
            out.push(Violation::new("r_squared", "r_squared out of range"));
        }
        if !(0.0..=1.0).contains(&self.p_value) {
            out.push(Violation::new("p_value", "p_value out of range"));
        }
        out
    }
}
