//! Agreement and quality instruments: Krippendorff's alpha, F1 against
//! experts, engagement, efficiency, bootstrap intervals and the
//! size-versus-quality regression.

mod agreement;
mod alpha;
mod bootstrap;
mod engagement;
mod regression;
pub mod special;

use thiserror::Error;

pub use agreement::{agreement_vs_experts, f1_score, ConfusionCounts, ExpertLabelSet};
pub use alpha::{alpha_from_counts, krippendorff_alpha, Alpha};
pub use bootstrap::{bootstrap_alpha_ci, MIN_ITERATIONS};
pub use engagement::{
    active_seconds, efficiency, engagement, engagement_by_session, EfficiencyOutcome, ParticipantActivity, Scope,
};
pub use regression::{ols, size_quality_regression, QualityFn, SizeQualityRegression, MAX_REDRAWS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("alpha undefined: no unit has two or more labels")]
    AlphaUndefined,
    #[error("F1 undefined: no positive predictions or positive references")]
    F1Undefined,
    #[error("no sentence is labeled by both sides")]
    EmptyOverlap,
    #[error("no participant with positive active time")]
    NoParticipants,
    #[error("quality undefined after {MAX_REDRAWS} redraws: {0}")]
    QualityUndefined(String),
    #[error("{0}")]
    Input(String),
}
