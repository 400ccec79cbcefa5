//! Typed records of the append-only event log.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use biasfeed_core::model::{Article, ExperimentGroup, Label, Mechanism, SentenceId, SessionId, Verdict};

/// One line of the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub event_id: u64,
    pub at: DateTime<Utc>,
    pub record: Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    SessionEnrolled {
        session_id: SessionId,
        group: ExperimentGroup,
    },
    Feedback(FeedbackBody),
    Survey(SurveyResponse),
    Analytics(AnalyticsEvent),
    AttentionAnswered {
        session_id: SessionId,
        answer_id: String,
        correct: bool,
    },
    TrustAnswered {
        session_id: SessionId,
        usable: bool,
    },
    Admin(AdminAction),
}

/// A feedback event minus the id and timestamp, which the log supplies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackBody {
    pub session_id: SessionId,
    pub sentence_id: SentenceId,
    pub mechanism: Mechanism,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Open questions of the usability survey, in display order.
pub const SURVEY_QUESTIONS: [&str; 8] = [
    "like",
    "reading_impact",
    "giving_feedback",
    "highlights",
    "user_interface",
    "irritations",
    "anything_else",
    "recommendation_reason",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyResponse {
    pub session_id: SessionId,
    /// 1..=10
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ease_of_use: Option<u8>,
    /// 0..=10
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nps: Option<u8>,
    #[serde(default)]
    pub answers: Vec<(String, String)>,
}

impl SurveyResponse {
    pub fn check(&self) -> Result<(), String> {
        if let Some(v) = self.ease_of_use {
            if !(1..=10).contains(&v) {
                return Err(format!("ease_of_use {v} outside 1..10"));
            }
        }
        if let Some(v) = self.nps {
            if v > 10 {
                return Err(format!("nps {v} outside 0..10"));
            }
        }
        for (q, _) in &self.answers {
            if !SURVEY_QUESTIONS.contains(&q.as_str()) {
                return Err(format!("unknown survey question {q:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticsKind {
    PageView,
    TutorialStarted,
    TutorialCompleted,
    ArticleOpened,
    SurveyOpened,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceClass {
    Mobile,
    Desktop,
    Other,
}

impl DeviceClass {
    /// Coarse class from a User-Agent string; the string itself is not kept.
    pub fn from_user_agent(ua: Option<&str>) -> Self {
        match ua {
            Some(ua) if ua.contains("Mobi") || ua.contains("Android") || ua.contains("iPhone") => DeviceClass::Mobile,
            Some(ua) if ua.contains("Windows") || ua.contains("Macintosh") || ua.contains("X11") => {
                DeviceClass::Desktop
            }
            _ => DeviceClass::Other,
        }
    }
}

/// Privacy-preserving usage event. There is deliberately no field for an
/// address, user agent or any other identifier besides the session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticsEvent {
    pub session_id: SessionId,
    pub kind: AnalyticsKind,
    /// Page path; for `article_opened`, the article id.
    pub page: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    pub device_class: DeviceClass,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AdminAction {
    IngestArticle { article: Article },
}
