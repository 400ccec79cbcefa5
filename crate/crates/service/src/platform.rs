//! Platform operations, independent of HTTP.
//!
//! Writes go through one lock that assigns the next event id, appends the
//! record durably and applies it, so the log has a total order and readers
//! only ever see fully applied records. Aggregation runs on cloned
//! snapshots outside the lock.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, RwLock, RwLockReadGuard};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use biasfeed_core::aggregation::{aggregate_all, fold_votes, sparkle_priorities, write_csv, write_jsonl, Band};
use biasfeed_core::classifier::{self, Classifier};
use biasfeed_core::ingest::{ingest_article, ArticleStore, IngestError, IngestReport, RawArticleDoc};
use biasfeed_core::metrics::ExpertLabelSet;
use biasfeed_core::model::{
    Article, ArticleId, DatasetRecord, ExperimentGroup, FeedbackEvent, Label, Lean, Mechanism, QualityReport,
    SentenceId, SessionId, Validate, Verdict,
};
use biasfeed_core::{run_pipeline, Config, PipelineInput, PipelineOutput};

use crate::error::ServiceError;
use crate::records::{
    AdminAction, AnalyticsEvent, AnalyticsKind, DeviceClass, FeedbackBody, LogRecord, Record, SurveyResponse,
};
use crate::state::PlatformState;
use crate::store::{EventStore, FileStore};

/// Groups assigned in rotation when experiment mode is on.
pub const ROTATION: [ExperimentGroup; 3] =
    [ExperimentGroup::Highlights, ExperimentGroup::Comparison, ExperimentGroup::Control];

pub const ATTENTION_QUESTION: &str = "Which statement about media bias is correct?";
/// `(answer id, text)`; only `positive_negative_or_neutral` is correct.
pub const ATTENTION_ANSWERS: [(&str, &str); 4] = [
    ("same_as_negative", "Bias is the same as negative sentiment."),
    (
        "positive_negative_or_neutral",
        "Bias can be both positive, negative or even not have particular sentiment.",
    ),
    ("same_as_positive", "Bias is the same as positive sentiment."),
    ("not_connected", "Bias and sentiment are never connected."),
];
pub const ATTENTION_CORRECT: &str = "positive_negative_or_neutral";

const ANCHORED_PROMPT: &str = "Do you agree with this classification?";
const DIRECT_PROMPT: &str = "Is this sentence biased?";

/// Mechanism a session uses for one sentence. Comparison sessions alternate
/// anchored and unanchored sentences in pairs, with a phase taken from the
/// session id so the pairing survives reloads.
pub fn mechanism_for(group: ExperimentGroup, session: &SessionId, sentence_index: usize) -> Mechanism {
    match group {
        ExperimentGroup::Highlights | ExperimentGroup::None => Mechanism::Highlights,
        ExperimentGroup::Control => Mechanism::Control,
        ExperimentGroup::Comparison => {
            if (sentence_index + session_parity(session)).is_multiple_of(2) {
                Mechanism::ComparisonAnchored
            } else {
                Mechanism::ComparisonUnanchored
            }
        }
    }
}

/// FNV-1a over the id bytes, low bit.
fn session_parity(session: &SessionId) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in session.as_str().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h & 1) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enrollment {
    pub session_id: SessionId,
    pub group: ExperimentGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleSummary {
    pub article_id: ArticleId,
    pub title: String,
    pub outlet: String,
    pub topic: String,
    pub lean: Lean,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub published_at: Option<DateTime<Utc>>,
    pub sentence_count: usize,
    pub progress: usize,
}

/// The session's own latest answer, echoed back as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteEcho {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_label: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceView {
    pub sentence_id: SentenceId,
    pub index: usize,
    pub text: String,
    pub is_quote: bool,
    pub mechanism: Mechanism,
    /// Absent whenever the session must not see the classifier's label.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shown_label: Option<Label>,
    pub sparkle: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub your_vote: Option<VoteEcho>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleView {
    pub article_id: ArticleId,
    pub title: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    pub outlet: String,
    pub topic: String,
    pub lean: Lean,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub published_at: Option<DateTime<Utc>>,
    pub group: ExperimentGroup,
    pub prompt: String,
    pub sentences: Vec<SentenceView>,
    pub progress: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub sentence_id: SentenceId,
    #[serde(default)]
    pub verdict: Option<Verdict>,
    #[serde(default)]
    pub direct_label: Option<Label>,
    #[serde(default)]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub vote_recorded: bool,
    pub event_id: u64,
    pub progress: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionQuestion {
    pub question: String,
    pub answers: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionOutcome {
    pub passed: bool,
    pub failures: u32,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustAck {
    pub usable: bool,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyRequest {
    #[serde(default)]
    pub ease_of_use: Option<u8>,
    #[serde(default)]
    pub nps: Option<u8>,
    #[serde(default)]
    pub answers: HashMap<String, String>,
}

/// Request metadata used to derive coarse analytics fields. Nothing here is
/// stored as is.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequestMeta {
    pub country: Option<String>,
    pub user_agent: Option<String>,
    pub accept_language: Option<String>,
}

impl RequestMeta {
    fn language(&self) -> String {
        self.accept_language
            .as_deref()
            .and_then(|l| l.split([',', ';']).next())
            .map(|l| l.trim().split('-').next().unwrap_or("").to_ascii_lowercase())
            .filter(|l| !l.is_empty() && l.len() <= 8 && l.chars().all(|c| c.is_ascii_alphabetic()))
            .unwrap_or_else(|| "unknown".into())
    }

    fn country(&self) -> Option<String> {
        self.country
            .as_deref()
            .map(str::trim)
            .filter(|c| c.len() == 2 && c.chars().all(|ch| ch.is_ascii_alphabetic()))
            .map(str::to_ascii_uppercase)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

impl ExportFormat {
    pub fn parse(value: &str) -> Result<Self, ServiceError> {
        match value {
            "csv" => Ok(ExportFormat::Csv),
            "jsonl" => Ok(ExportFormat::Jsonl),
            other => Err(ServiceError::BadRequest(format!("unknown export format {other:?} (use csv or jsonl)"))),
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Csv => "text/csv; charset=utf-8",
            ExportFormat::Jsonl => "application/x-ndjson",
        }
    }
}

pub fn render_export(records: &[DatasetRecord], format: ExportFormat) -> Vec<u8> {
    let mut out = Vec::new();
    match format {
        ExportFormat::Csv => write_csv(records, &mut out).expect("writing to memory"),
        ExportFormat::Jsonl => write_jsonl(records, &mut out).expect("writing to memory"),
    }
    out
}

/// Cloned inputs of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineSnapshot {
    pub articles: Vec<Article>,
    pub events: Vec<FeedbackEvent>,
    pub excluded: HashSet<SessionId>,
    pub opens: Vec<(SessionId, ArticleId, DateTime<Utc>)>,
}

#[derive(Debug, Default)]
struct Sparkles {
    by_article: HashMap<ArticleId, HashSet<SentenceId>>,
    computed_at: Option<DateTime<Utc>>,
}

struct Inner {
    state: PlatformState,
    store: Box<dyn EventStore>,
    since_snapshot: u64,
}

pub struct Platform {
    config: Config,
    admin_token: Option<String>,
    experts: Option<ExpertLabelSet>,
    classifier: Arc<dyn Classifier>,
    inner: RwLock<Inner>,
    sparkles: RwLock<Sparkles>,
}

impl std::fmt::Debug for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Platform").field("last_event_id", &self.read().state.last_event_id).finish()
    }
}

impl Platform {
    /// Opens the file store under `config.storage.dir` and recovers state.
    pub fn open(config: Config) -> Result<Self, ServiceError> {
        let store = FileStore::open(&config.storage.dir)?;
        Self::with_store(config, Box::new(store))
    }

    pub fn with_store(config: Config, mut store: Box<dyn EventStore>) -> Result<Self, ServiceError> {
        config.check().map_err(|e| ServiceError::Internal(e.to_string()))?;
        let recovered = store.recover()?;
        if recovered.truncated_bytes > 0 {
            tracing::warn!(bytes = recovered.truncated_bytes, "recovered from a torn log write");
        }
        let state = recovered.into_state();
        let classifier: Arc<dyn Classifier> = classifier::from_config(&config.classifier_config())
            .map_err(|e| ServiceError::Internal(format!("classifier: {e}")))?
            .into();
        let experts = match &config.experts.path {
            Some(path) => {
                let file = std::fs::File::open(path)
                    .map_err(|e| ServiceError::Internal(format!("{}: {e}", path.display())))?;
                Some(
                    ExpertLabelSet::from_csv(
                        file,
                        &config.replay.expert_sentence,
                        &config.replay.expert_label,
                        path.display().to_string(),
                    )
                    .map_err(|e| ServiceError::Internal(format!("{}: {e}", path.display())))?,
                )
            }
            None => None,
        };
        let platform = Self {
            admin_token: config.admin_token(),
            config,
            experts,
            classifier,
            inner: RwLock::new(Inner {
                state,
                store,
                since_snapshot: 0,
            }),
            sparkles: RwLock::new(Sparkles::default()),
        };
        platform.refresh_sparkles();
        Ok(platform)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    fn read(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Checks a candidate record against current state and appends it, all
    /// under the write lock. Returns the assigned event id.
    fn commit<T>(
        &self,
        at: Option<DateTime<Utc>>,
        build: impl FnOnce(&PlatformState) -> Result<(Record, T), ServiceError>,
    ) -> Result<(u64, T), ServiceError> {
        let mut inner = self.inner.write().unwrap_or_else(|e| e.into_inner());
        let (record, extra) = build(&inner.state)?;
        let rec = LogRecord {
            event_id: inner.state.last_event_id + 1,
            at: at.unwrap_or_else(Utc::now),
            record,
        };
        inner.store.append(&rec)?;
        inner.state.apply(&rec);
        inner.since_snapshot += 1;
        let every = self.config.storage.snapshot_every;
        if every > 0 && inner.since_snapshot >= every {
            let Inner { state, store, .. } = &mut *inner;
            match store.write_snapshot(state) {
                Ok(()) => inner.since_snapshot = 0,
                Err(err) => tracing::warn!(%err, "snapshot failed; the log alone still recovers state"),
            }
        }
        Ok((rec.event_id, extra))
    }

    /// Writes a snapshot now (used on graceful shutdown).
    pub fn snapshot(&self) -> Result<(), ServiceError> {
        let mut inner = self.inner.write().unwrap_or_else(|e| e.into_inner());
        let Inner { state, store, .. } = &mut *inner;
        store.write_snapshot(state)?;
        inner.since_snapshot = 0;
        Ok(())
    }

    /// Serialized state, for recovery comparisons.
    pub fn state_json(&self) -> String {
        serde_json::to_string(&self.read().state).expect("state serializes")
    }

    pub fn last_event_id(&self) -> u64 {
        self.read().state.last_event_id
    }

    pub fn enroll(&self, existing: Option<&SessionId>) -> Result<Enrollment, ServiceError> {
        if let Some(id) = existing {
            if let Some(group) = self.read().state.group_of(id) {
                return Ok(Enrollment {
                    session_id: id.clone(),
                    group,
                });
            }
        }
        let session_id = SessionId::from(uuid::Uuid::new_v4().to_string());
        let experiment = self.config.experiment.enabled;
        let (_, group) = self.commit(None, |state| {
            let group = if experiment {
                ROTATION[(state.enrollments % ROTATION.len() as u64) as usize]
            } else {
                ExperimentGroup::None
            };
            Ok((
                Record::SessionEnrolled {
                    session_id: session_id.clone(),
                    group,
                },
                group,
            ))
        })?;
        Ok(Enrollment { session_id, group })
    }

    fn group(state: &PlatformState, session: Option<&SessionId>) -> ExperimentGroup {
        session.and_then(|s| state.group_of(s)).unwrap_or_default()
    }

    pub fn articles(&self, session: Option<&SessionId>) -> Vec<ArticleSummary> {
        let inner = self.read();
        inner
            .state
            .articles
            .iter()
            .map(|a| ArticleSummary {
                article_id: a.article_id.clone(),
                title: a.title.clone(),
                outlet: a.outlet.clone(),
                topic: a.topic.clone(),
                lean: a.lean,
                published_at: a.published_at,
                sentence_count: a.sentences.len(),
                progress: session.map_or(0, |s| inner.state.progress(s, &a.article_id)),
            })
            .collect()
    }

    pub fn article_view(&self, id: &ArticleId, session: Option<&SessionId>) -> Result<ArticleView, ServiceError> {
        let inner = self.read();
        let state = &inner.state;
        let article = state
            .article(id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown article {id}")))?;
        let group = Self::group(state, session);
        let sparkles = self.sparkles.read().unwrap_or_else(|e| e.into_inner());
        let marked = sparkles.by_article.get(id);
        let sentences = article
            .sentences
            .iter()
            .map(|s| {
                let mechanism = match session {
                    Some(sid) => mechanism_for(group, sid, s.index),
                    None => Mechanism::Highlights,
                };
                SentenceView {
                    sentence_id: s.sentence_id.clone(),
                    index: s.index,
                    text: s.text.clone(),
                    is_quote: s.is_quote,
                    mechanism,
                    shown_label: mechanism.is_anchored().then_some(s.shown_label),
                    sparkle: marked.is_some_and(|m| m.contains(&s.sentence_id)),
                    your_vote: session.and_then(|sid| state.latest_vote(sid, &s.sentence_id)).map(|e| VoteEcho {
                        verdict: e.verdict,
                        direct_label: e.direct_label,
                        reason: e.reason.clone(),
                    }),
                }
            })
            .collect();
        Ok(ArticleView {
            article_id: article.article_id.clone(),
            title: article.title.clone(),
            author: article.author.clone(),
            outlet: article.outlet.clone(),
            topic: article.topic.clone(),
            lean: article.lean,
            published_at: article.published_at,
            group,
            prompt: if group == ExperimentGroup::Control { DIRECT_PROMPT } else { ANCHORED_PROMPT }.into(),
            sentences,
            progress: session.map_or(0, |s| state.progress(s, id)),
        })
    }

    pub fn post_feedback(&self, session: &SessionId, req: FeedbackRequest) -> Result<FeedbackAck, ServiceError> {
        let limit = self.config.reason.max_chars;
        let (event_id, article) = self.commit(None, |state| {
            let group = state.group_of(session).ok_or(ServiceError::NoSession)?;
            let (a, s) = state
                .locate(&req.sentence_id)
                .ok_or_else(|| ServiceError::NotFound(format!("unknown sentence {}", req.sentence_id)))?;
            let article = &state.articles[a];
            let mechanism = mechanism_for(group, session, article.sentences[s].index);
            let body = FeedbackBody {
                session_id: session.clone(),
                sentence_id: req.sentence_id.clone(),
                mechanism,
                verdict: req.verdict,
                direct_label: req.direct_label,
                reason: req.reason.clone().filter(|r| !r.trim().is_empty()),
            };
            let candidate = FeedbackEvent {
                event_id: 0,
                session_id: body.session_id.clone(),
                sentence_id: body.sentence_id.clone(),
                mechanism,
                verdict: body.verdict,
                direct_label: body.direct_label,
                reason: body.reason.clone(),
                created_at: Utc::now(),
            };
            let violations = candidate.validate_with_limit(limit);
            if !violations.is_empty() {
                let expected = if mechanism.is_anchored() { "a verdict" } else { "a direct_label" };
                let messages: Vec<String> = violations.iter().map(|v| v.message.clone()).collect();
                return Err(ServiceError::Unprocessable(format!(
                    "{} (the {} mechanism expects {expected})",
                    messages.join("; "),
                    serde_json::to_value(mechanism).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
                )));
            }
            Ok((Record::Feedback(body), article.article_id.clone()))
        })?;
        Ok(FeedbackAck {
            vote_recorded: true,
            event_id,
            progress: self.read().state.progress(session, &article),
        })
    }

    /// Up to `k` other articles, least annotated first. Articles the session
    /// has completed are skipped unless nothing else is left.
    pub fn recommendations(&self, session: Option<&SessionId>, current: Option<&ArticleId>, k: usize) -> Vec<ArticleId> {
        let inner = self.read();
        let state = &inner.state;
        let mut others: Vec<(usize, usize, &Article)> = state
            .articles
            .iter()
            .enumerate()
            .filter(|(_, a)| Some(&a.article_id) != current)
            .map(|(i, a)| (state.article_votes(&a.article_id), i, a))
            .collect();
        others.sort_by_key(|(votes, i, _)| (*votes, *i));
        let completed = |a: &Article| session.is_some_and(|s| state.progress(s, &a.article_id) >= a.sentences.len());
        let open: Vec<ArticleId> = others
            .iter()
            .filter(|(_, _, a)| !completed(a))
            .map(|(_, _, a)| a.article_id.clone())
            .collect();
        let pool = if open.is_empty() {
            others.iter().map(|(_, _, a)| a.article_id.clone()).collect()
        } else {
            open
        };
        pool.into_iter().take(k).collect()
    }

    pub fn attention_question(&self) -> AttentionQuestion {
        AttentionQuestion {
            question: ATTENTION_QUESTION.into(),
            answers: ATTENTION_ANSWERS.iter().map(|(id, text)| (id.to_string(), text.to_string())).collect(),
        }
    }

    fn require_experiment(state: &PlatformState, session: &SessionId) -> Result<(), ServiceError> {
        match state.group_of(session) {
            None => Err(ServiceError::NoSession),
            Some(ExperimentGroup::None) => Err(ServiceError::InvalidState(
                "study checks only apply to experiment sessions".into(),
            )),
            Some(_) => Ok(()),
        }
    }

    pub fn attention(&self, session: &SessionId, answer_id: &str) -> Result<AttentionOutcome, ServiceError> {
        if !ATTENTION_ANSWERS.iter().any(|(id, _)| *id == answer_id) {
            return Err(ServiceError::Unprocessable(format!("unknown answer {answer_id:?}")));
        }
        let outcome = |state: &PlatformState| {
            let s = &state.sessions[session];
            AttentionOutcome {
                passed: s.attention_passed,
                failures: s.profile.attention_failures,
                excluded: s.profile.excluded && s.profile.exclusion_reason == biasfeed_core::model::ExclusionReason::AttentionFail,
            }
        };
        {
            let inner = self.read();
            Self::require_experiment(&inner.state, session)?;
            let current = outcome(&inner.state);
            // The check is settled once passed or failed out.
            if current.passed || current.excluded {
                return Ok(current);
            }
        }
        self.commit(None, |state| {
            Self::require_experiment(state, session)?;
            Ok((
                Record::AttentionAnswered {
                    session_id: session.clone(),
                    answer_id: answer_id.to_owned(),
                    correct: answer_id == ATTENTION_CORRECT,
                },
                (),
            ))
        })?;
        Ok(outcome(&self.read().state))
    }

    pub fn trust(&self, session: &SessionId, usable: bool) -> Result<TrustAck, ServiceError> {
        self.commit(None, |state| {
            Self::require_experiment(state, session)?;
            Ok((
                Record::TrustAnswered {
                    session_id: session.clone(),
                    usable,
                },
                (),
            ))
        })?;
        let inner = self.read();
        Ok(TrustAck {
            usable,
            excluded: inner.state.sessions[session].profile.excluded,
        })
    }

    pub fn survey(&self, session: &SessionId, req: SurveyRequest) -> Result<(), ServiceError> {
        let mut answers: Vec<(String, String)> = req.answers.into_iter().filter(|(_, v)| !v.trim().is_empty()).collect();
        answers.sort();
        let response = SurveyResponse {
            session_id: session.clone(),
            ease_of_use: req.ease_of_use,
            nps: req.nps,
            answers,
        };
        response.check().map_err(ServiceError::Unprocessable)?;
        self.commit(None, |state| {
            state.group_of(session).ok_or(ServiceError::NoSession)?;
            Ok((Record::Survey(response), ()))
        })?;
        Ok(())
    }

    pub fn analytics(
        &self,
        session: &SessionId,
        kind: AnalyticsKind,
        page: &str,
        meta: &RequestMeta,
    ) -> Result<(), ServiceError> {
        if page.len() > 200 {
            return Err(ServiceError::Unprocessable("page is longer than 200 bytes".into()));
        }
        let event = AnalyticsEvent {
            session_id: session.clone(),
            kind,
            page: page.to_owned(),
            country: meta.country(),
            device_class: DeviceClass::from_user_agent(meta.user_agent.as_deref()),
            language: meta.language(),
        };
        self.commit(None, |state| {
            state.group_of(session).ok_or(ServiceError::NoSession)?;
            Ok((Record::Analytics(event), ()))
        })?;
        Ok(())
    }

    pub fn check_admin(&self, bearer: Option<&str>) -> Result<(), ServiceError> {
        match (&self.admin_token, bearer) {
            (Some(expected), Some(given)) if !expected.is_empty() && constant_time_eq(expected, given) => Ok(()),
            _ => Err(ServiceError::Unauthorized),
        }
    }

    pub fn pipeline_snapshot(&self) -> PipelineSnapshot {
        let inner = self.read();
        PipelineSnapshot {
            articles: inner.state.articles.clone(),
            events: inner.state.feedback.clone(),
            excluded: inner.state.excluded_sessions(),
            opens: inner.state.article_opens(),
        }
    }

    pub fn run_pipeline(&self, snapshot: &PipelineSnapshot) -> PipelineOutput {
        run_pipeline(
            PipelineInput {
                articles: &snapshot.articles,
                events: &snapshot.events,
                excluded_sessions: &snapshot.excluded,
                experts: self.experts.as_ref(),
                article_opens: &snapshot.opens,
            },
            &self.config,
        )
    }

    pub fn report(&self) -> QualityReport {
        self.run_pipeline(&self.pipeline_snapshot()).report
    }

    pub fn export(&self, format: ExportFormat) -> Vec<u8> {
        render_export(&self.run_pipeline(&self.pipeline_snapshot()).dataset, format)
    }

    /// Recomputes the sparkle markers from a fresh aggregation snapshot.
    pub fn refresh_sparkles(&self) {
        let snapshot = self.pipeline_snapshot();
        let units: Vec<SentenceId> = snapshot
            .articles
            .iter()
            .flat_map(|a| a.sentences.iter().map(|s| s.sentence_id.clone()))
            .collect();
        let shown: HashMap<SentenceId, Label> = snapshot
            .articles
            .iter()
            .flat_map(|a| a.sentences.iter().map(|s| (s.sentence_id.clone(), s.shown_label)))
            .collect();
        let fold = fold_votes(&snapshot.events, &units, &shown, &snapshot.excluded);
        let (lo, hi) = self.config.band();
        let aggregates = aggregate_all(&fold.matrix, self.config.min_votes, Band { lo, hi });
        let mut by_article = HashMap::new();
        let mut offset = 0;
        for article in &snapshot.articles {
            let n = article.sentences.len();
            let marked = sparkle_priorities(&aggregates[offset..offset + n], self.config.sparkles.k);
            by_article.insert(article.article_id.clone(), marked.into_iter().collect());
            offset += n;
        }
        *self.sparkles.write().unwrap_or_else(|e| e.into_inner()) = Sparkles {
            by_article,
            computed_at: Some(Utc::now()),
        };
    }

    pub fn sparkles_computed_at(&self) -> Option<DateTime<Utc>> {
        self.sparkles.read().unwrap_or_else(|e| e.into_inner()).computed_at
    }

    /// Labels and stores documents. Each document is handled on its own;
    /// failures are listed in the report.
    pub fn ingest(&self, docs: &[RawArticleDoc], force: bool) -> IngestReport {
        let mut report = IngestReport::default();
        let mut store = LoggedArticles { platform: self };
        for (i, doc) in docs.iter().enumerate() {
            match ingest_article(doc, self.classifier.as_ref(), &mut store, force) {
                Ok(article) => report.add(&article),
                Err(err) => report.failures.push(biasfeed_core::ingest::IngestFailure {
                    path: if doc.source_url.is_empty() { format!("document {i}") } else { doc.source_url.clone() },
                    error: err.to_string(),
                }),
            }
        }
        report
    }

    /// Loads already labeled articles and recorded feedback, keeping the
    /// original timestamps and order. Unknown sessions are enrolled without
    /// an experiment group.
    pub fn import(&self, articles: &[Article], events: &[FeedbackEvent]) -> Result<(), ServiceError> {
        for article in articles {
            let at = Some(article.published_at.unwrap_or_else(Utc::now));
            self.commit(at, |_| {
                Ok((
                    Record::Admin(AdminAction::IngestArticle {
                        article: article.clone(),
                    }),
                    (),
                ))
            })?;
        }
        let mut ordered: Vec<&FeedbackEvent> = events.iter().collect();
        ordered.sort_by_key(|e| e.event_id);
        for e in ordered {
            if self.read().state.group_of(&e.session_id).is_none() {
                self.commit(Some(e.created_at), |_| {
                    Ok((
                        Record::SessionEnrolled {
                            session_id: e.session_id.clone(),
                            group: ExperimentGroup::None,
                        },
                        (),
                    ))
                })?;
            }
            self.commit(Some(e.created_at), |_| {
                Ok((
                    Record::Feedback(FeedbackBody {
                        session_id: e.session_id.clone(),
                        sentence_id: e.sentence_id.clone(),
                        mechanism: e.mechanism,
                        verdict: e.verdict,
                        direct_label: e.direct_label,
                        reason: e.reason.clone(),
                    }),
                    (),
                ))
            })?;
        }
        Ok(())
    }
}

fn constant_time_eq(a: &str, b: &str) -> bool {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Article store that persists through the event log.
struct LoggedArticles<'a> {
    platform: &'a Platform,
}

impl ArticleStore for LoggedArticles<'_> {
    fn find_by_url(&self, source_url: &str) -> Option<Article> {
        let inner = self.platform.read();
        inner.state.articles.iter().find(|a| a.source_url == source_url).cloned()
    }

    fn upsert(&mut self, article: Article) -> Result<(), IngestError> {
        if !article.is_valid() {
            return Err(IngestError::Invalid(format!("{:?}", article.validate())));
        }
        self.platform
            .commit(None, |_| Ok((Record::Admin(AdminAction::IngestArticle { article }), ())))
            .map(|_| ())
            .map_err(|e| IngestError::Store(e.to_string()))
    }
}
