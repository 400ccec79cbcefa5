//! Engagement, active time and efficiency.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::model::{ArticleId, FeedbackEvent, SentenceId, SessionId};
use crate::stats::{mean, sample_sd};

/// Which events count towards an engagement figure.
#[derive(Debug, Clone, Copy)]
pub enum Scope<'a> {
    Global,
    /// Sessions of one experiment group.
    Sessions(&'a HashSet<SessionId>),
    /// Sentences of one article.
    Sentences(&'a HashSet<SentenceId>),
}

impl Scope<'_> {
    fn admits(&self, event: &FeedbackEvent) -> bool {
        match self {
            Scope::Global => true,
            Scope::Sessions(s) => s.contains(&event.session_id),
            Scope::Sentences(s) => s.contains(&event.sentence_id),
        }
    }
}

/// Distinct (session, sentence) pairs with at least one event in scope.
/// Changing a vote does not add engagement.
pub fn engagement(events: &[FeedbackEvent], scope: Scope<'_>) -> usize {
    events
        .iter()
        .filter(|e| scope.admits(e))
        .map(|e| (&e.session_id, &e.sentence_id))
        .collect::<HashSet<_>>()
        .len()
}

/// Engagement of each session.
pub fn engagement_by_session(events: &[FeedbackEvent]) -> BTreeMap<SessionId, usize> {
    let mut pairs: BTreeMap<SessionId, HashSet<&SentenceId>> = BTreeMap::new();
    for e in events {
        pairs.entry(e.session_id.clone()).or_default().insert(&e.sentence_id);
    }
    pairs.into_iter().map(|(k, v)| (k, v.len())).collect()
}

/// Active seconds per session: for every article the session touched, the
/// span from its first page view (or first feedback) to its last feedback,
/// summed over articles.
pub fn active_seconds(
    events: &[FeedbackEvent],
    sentence_article: &HashMap<SentenceId, ArticleId>,
    article_opens: &[(SessionId, ArticleId, DateTime<Utc>)],
) -> BTreeMap<SessionId, f64> {
    let mut spans: BTreeMap<(SessionId, ArticleId), (DateTime<Utc>, DateTime<Utc>)> = BTreeMap::new();
    for e in events {
        let Some(article) = sentence_article.get(&e.sentence_id) else {
            continue;
        };
        spans
            .entry((e.session_id.clone(), article.clone()))
            .and_modify(|(first, last)| {
                *first = (*first).min(e.created_at);
                *last = (*last).max(e.created_at);
            })
            .or_insert((e.created_at, e.created_at));
    }
    for (session, article, at) in article_opens {
        if let Some((first, _)) = spans.get_mut(&(session.clone(), article.clone())) {
            *first = (*first).min(*at);
        }
    }
    let mut out: BTreeMap<SessionId, f64> = BTreeMap::new();
    for ((session, _), (first, last)) in spans {
        *out.entry(session).or_default() += (last - first).num_milliseconds() as f64 / 1000.0;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantActivity {
    pub session_id: SessionId,
    pub engagement: usize,
    pub active_seconds: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyOutcome {
    pub mean: f64,
    pub sd: f64,
    pub per_participant: Vec<(SessionId, f64)>,
    /// Participants without positive active time.
    pub excluded: Vec<SessionId>,
}

/// Per participant `engagement / active_seconds * f1`, then mean and sample
/// SD across participants. Participants with non-positive time are excluded
/// and listed.
pub fn efficiency(participants: &[ParticipantActivity]) -> Result<EfficiencyOutcome, MetricsError> {
    let mut per_participant = Vec::new();
    let mut excluded = Vec::new();
    for p in participants {
        if p.active_seconds > 0.0 && p.active_seconds.is_finite() {
            per_participant.push((p.session_id.clone(), p.engagement as f64 / p.active_seconds * p.f1));
        } else {
            excluded.push(p.session_id.clone());
        }
    }
    let values: Vec<f64> = per_participant.iter().map(|(_, v)| *v).collect();
    let (Some(mean), Some(sd)) = (mean(&values), sample_sd(&values)) else {
        return Err(MetricsError::NoParticipants);
    };
    Ok(EfficiencyOutcome {
        mean,
        sd,
        per_participant,
        excluded,
    })
}
