//! In-memory platform state, rebuilt by applying log records in order.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use biasfeed_core::model::{
    AnnotatorProfile, Article, ArticleId, ExclusionReason, ExperimentGroup, FeedbackEvent, SentenceId, SessionId,
};

use crate::records::{AdminAction, AnalyticsEvent, AnalyticsKind, LogRecord, Record, SurveyResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub profile: AnnotatorProfile,
    pub attention_passed: bool,
    pub enrolled_at: DateTime<Utc>,
}

/// Everything the platform knows. Serialized as a snapshot; the derived
/// lookup tables are rebuilt on load.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlatformState {
    pub last_event_id: u64,
    /// In ingest order.
    pub articles: Vec<Article>,
    pub sessions: BTreeMap<SessionId, SessionState>,
    pub enrollments: u64,
    pub feedback: Vec<FeedbackEvent>,
    pub surveys: Vec<SurveyResponse>,
    pub analytics: Vec<(DateTime<Utc>, AnalyticsEvent)>,
    #[serde(skip)]
    index: Index,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Index {
    /// sentence -> (article position, sentence position)
    sentences: HashMap<SentenceId, (usize, usize)>,
    articles: HashMap<ArticleId, usize>,
    /// (session, sentence) -> position of the latest event in `feedback`
    latest: HashMap<(SessionId, SentenceId), usize>,
    /// Distinct (session, sentence) pairs per article.
    pairs_per_article: HashMap<ArticleId, usize>,
    /// Distinct sentences a session voted on, per article.
    progress: HashMap<(SessionId, ArticleId), usize>,
}

impl PlatformState {
    /// Rebuilds the lookup tables; call after deserializing.
    pub fn reindex(&mut self) {
        self.index = Index::default();
        for (a, article) in self.articles.iter().enumerate() {
            self.index.articles.insert(article.article_id.clone(), a);
            for (s, sentence) in article.sentences.iter().enumerate() {
                self.index.sentences.insert(sentence.sentence_id.clone(), (a, s));
            }
        }
        for pos in 0..self.feedback.len() {
            self.index_feedback(pos);
        }
    }

    fn index_feedback(&mut self, pos: usize) {
        let e = &self.feedback[pos];
        let key = (e.session_id.clone(), e.sentence_id.clone());
        let fresh = self.index.latest.insert(key, pos).is_none();
        if !fresh {
            return;
        }
        if let Some(&(a, _)) = self.index.sentences.get(&e.sentence_id) {
            let article = self.articles[a].article_id.clone();
            *self.index.pairs_per_article.entry(article.clone()).or_default() += 1;
            *self.index.progress.entry((e.session_id.clone(), article)).or_default() += 1;
        }
    }

    pub fn apply(&mut self, rec: &LogRecord) {
        self.last_event_id = rec.event_id;
        match &rec.record {
            Record::SessionEnrolled { session_id, group } => {
                self.enrollments += 1;
                self.sessions.entry(session_id.clone()).or_insert_with(|| SessionState {
                    profile: AnnotatorProfile::new(session_id.clone(), *group),
                    attention_passed: false,
                    enrolled_at: rec.at,
                });
            }
            Record::Feedback(body) => {
                self.feedback.push(FeedbackEvent {
                    event_id: rec.event_id,
                    session_id: body.session_id.clone(),
                    sentence_id: body.sentence_id.clone(),
                    mechanism: body.mechanism,
                    verdict: body.verdict,
                    direct_label: body.direct_label,
                    reason: body.reason.clone(),
                    created_at: rec.at,
                });
                self.index_feedback(self.feedback.len() - 1);
            }
            Record::Survey(s) => self.surveys.push(s.clone()),
            Record::Analytics(a) => self.analytics.push((rec.at, a.clone())),
            Record::AttentionAnswered {
                session_id, correct, ..
            } => {
                if let Some(s) = self.sessions.get_mut(session_id) {
                    if *correct {
                        s.attention_passed = true;
                    } else {
                        s.profile.attention_failures += 1;
                        if s.profile.attention_failures >= 2 {
                            s.profile.exclude(ExclusionReason::AttentionFail);
                        }
                    }
                }
            }
            Record::TrustAnswered { session_id, usable } => {
                if let Some(s) = self.sessions.get_mut(session_id) {
                    s.profile.trust_usable = *usable;
                    match (usable, s.profile.exclusion_reason) {
                        (false, ExclusionReason::None) => s.profile.exclude(ExclusionReason::TrustFlag),
                        (true, ExclusionReason::TrustFlag) => s.profile.exclude(ExclusionReason::None),
                        _ => {}
                    }
                }
            }
            Record::Admin(AdminAction::IngestArticle { article }) => {
                match self.index.articles.get(&article.article_id) {
                    Some(&pos) => self.articles[pos] = article.clone(),
                    None => self.articles.push(article.clone()),
                }
                self.reindex();
            }
        }
    }

    pub fn article(&self, id: &ArticleId) -> Option<&Article> {
        self.index.articles.get(id).map(|&i| &self.articles[i])
    }

    /// Article position and sentence position of a sentence.
    pub fn locate(&self, id: &SentenceId) -> Option<(usize, usize)> {
        self.index.sentences.get(id).copied()
    }

    pub fn latest_vote(&self, session: &SessionId, sentence: &SentenceId) -> Option<&FeedbackEvent> {
        self.index
            .latest
            .get(&(session.clone(), sentence.clone()))
            .map(|&p| &self.feedback[p])
    }

    /// Distinct sentences of `article` the session has given feedback on.
    pub fn progress(&self, session: &SessionId, article: &ArticleId) -> usize {
        self.index
            .progress
            .get(&(session.clone(), article.clone()))
            .copied()
            .unwrap_or(0)
    }

    /// Distinct (session, sentence) pairs on an article.
    pub fn article_votes(&self, article: &ArticleId) -> usize {
        self.index.pairs_per_article.get(article).copied().unwrap_or(0)
    }

    pub fn excluded_sessions(&self) -> HashSet<SessionId> {
        self.sessions
            .iter()
            .filter(|(_, s)| s.profile.excluded)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn group_of(&self, session: &SessionId) -> Option<ExperimentGroup> {
        self.sessions.get(session).map(|s| s.profile.group)
    }

    /// `(session, article, time)` of every article-opened analytics event.
    pub fn article_opens(&self) -> Vec<(SessionId, ArticleId, DateTime<Utc>)> {
        self.analytics
            .iter()
            .filter(|(_, a)| a.kind == AnalyticsKind::ArticleOpened)
            .map(|(at, a)| (a.session_id.clone(), ArticleId::from(a.page.as_str()), *at))
            .collect()
    }
}
