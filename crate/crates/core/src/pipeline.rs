//! The batch pipeline: fold, spam filter, aggregate, measure, export.
//!
//! It is a pure function of a snapshot and the configuration, so the
//! service's admin report and the offline replay produce the same report for
//! the same data.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aggregation::{
    aggregate_all, export_dataset, filter_spammers, fold_votes, spammer_scores, AnnotatorReliability, Band,
    FoldOutcome, SpamFilterOutcome,
};
use crate::config::{Config, QualityKind};
use crate::metrics::{
    active_seconds, agreement_vs_experts, bootstrap_alpha_ci, efficiency, engagement, engagement_by_session,
    krippendorff_alpha, size_quality_regression, ExpertLabelSet, ParticipantActivity, QualityFn, Scope,
    SizeQualityRegression,
};
use crate::model::{
    Article, ArticleId, DatasetRecord, EfficiencySummary, FeedbackEvent, Label, PipelineCounts, QualityReport,
    SentenceAggregate, SentenceId, SessionId,
};

/// A read-only snapshot of platform data.
#[derive(Debug, Clone, Copy)]
pub struct PipelineInput<'a> {
    /// Articles in ingest order.
    pub articles: &'a [Article],
    pub events: &'a [FeedbackEvent],
    /// Sessions excluded by the study checks (attention, trust).
    pub excluded_sessions: &'a HashSet<SessionId>,
    pub experts: Option<&'a ExpertLabelSet>,
    /// Article page views, used to start active-time spans.
    pub article_opens: &'a [(SessionId, ArticleId, DateTime<Utc>)],
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: QualityReport,
    pub fold: FoldOutcome,
    pub reliability: BTreeMap<SessionId, AnnotatorReliability>,
    pub spam: SpamFilterOutcome,
    /// One aggregate per sentence, in article then index order.
    pub aggregates: Vec<SentenceAggregate>,
    pub dataset: Vec<DatasetRecord>,
    pub regression: Option<SizeQualityRegression>,
}

impl PipelineOutput {
    pub fn final_labels(&self) -> BTreeMap<SentenceId, Label> {
        self.aggregates
            .iter()
            .filter_map(|a| a.final_label.map(|l| (a.sentence_id.clone(), l)))
            .collect()
    }
}

pub fn run_pipeline(input: PipelineInput<'_>, config: &Config) -> PipelineOutput {
    let units: Vec<SentenceId> = input
        .articles
        .iter()
        .flat_map(|a| a.sentences.iter().map(|s| s.sentence_id.clone()))
        .collect();
    let shown: HashMap<SentenceId, Label> = input
        .articles
        .iter()
        .flat_map(|a| a.sentences.iter().map(|s| (s.sentence_id.clone(), s.shown_label)))
        .collect();

    let fold = fold_votes(input.events, &units, &shown, input.excluded_sessions);
    let reliability = spammer_scores(&fold.matrix, config.spam.min_votes as usize);
    let spam = filter_spammers(
        &reliability,
        &fold.matrix,
        config.spam.percentile,
        config.spam.agreement_floor,
    );
    let (lo, hi) = config.band();
    let aggregates = aggregate_all(&spam.matrix, config.min_votes, Band { lo, hi });
    let dataset = export_dataset(&aggregates, input.articles);

    let counts = PipelineCounts {
        raw_events: input.events.len(),
        folded_votes: fold.matrix.n_cells(),
        valid_votes: spam.matrix.n_cells(),
        removed_annotators: spam.excluded.len(),
        removed_votes: spam.removed_votes,
        labeled: aggregates.iter().filter(|a| !a.status.insufficient).count(),
        decided: aggregates.iter().filter(|a| a.status.decided).count(),
        controversial: aggregates.iter().filter(|a| a.status.controversial).count(),
        undecided: aggregates.iter().filter(|a| a.status.undecided).count(),
    };

    let mut report = QualityReport {
        alpha: None,
        alpha_degenerate: false,
        alpha_error: None,
        alpha_ci: None,
        f1_vs_experts: None,
        expert_agreement: None,
        expert_agreement_without_quotes: None,
        engagement: engagement(input.events, Scope::Global),
        mean_efficiency: None,
        counts,
        regression: None,
    };

    match krippendorff_alpha(&spam.matrix) {
        Ok(alpha) => {
            report.alpha = Some(alpha.value);
            report.alpha_degenerate = alpha.degenerate;
            let mut rng = ChaCha8Rng::seed_from_u64(config.bootstrap.seed);
            match bootstrap_alpha_ci(
                &spam.matrix,
                config.bootstrap.iterations,
                config.bootstrap.confidence,
                &mut rng,
            ) {
                Ok(ci) => report.alpha_ci = Some(ci),
                Err(err) => tracing::warn!(%err, "bootstrap interval skipped"),
            }
        }
        Err(err) => report.alpha_error = Some(err.to_string()),
    }

    if let Some(experts) = input.experts {
        let final_labels: BTreeMap<SentenceId, Label> = aggregates
            .iter()
            .filter_map(|a| a.final_label.map(|l| (a.sentence_id.clone(), l)))
            .collect();
        let quotes: HashSet<SentenceId> = input
            .articles
            .iter()
            .flat_map(|a| a.sentences.iter().filter(|s| s.is_quote).map(|s| s.sentence_id.clone()))
            .collect();
        if let Ok(all) = agreement_vs_experts(&final_labels, experts, false, &quotes) {
            report.f1_vs_experts = crate::metrics::f1_score(&(&all).into()).ok();
            report.expert_agreement = Some(all);
        }
        report.expert_agreement_without_quotes = agreement_vs_experts(&final_labels, experts, true, &quotes).ok();
        report.mean_efficiency = efficiency_summary(&input, &spam, experts);
    }

    let regression = if config.regression.samples > 0 {
        let quality = match (config.regression.quality, input.experts) {
            (Some(QualityKind::Alpha), _) | (None, None) => Some(QualityFn::Alpha),
            (Some(QualityKind::F1), Some(experts)) | (None, Some(experts)) => Some(QualityFn::F1 { experts }),
            (Some(QualityKind::F1), None) => None,
        };
        quality.and_then(|quality| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.regression.seed);
            size_quality_regression(
                &spam.matrix,
                quality,
                config.regression.samples,
                config.regression.min_size..=spam.matrix.n_cells(),
                &mut rng,
            )
            .map_err(|err| tracing::warn!(%err, "size-quality regression skipped"))
            .ok()
        })
    } else {
        None
    };
    report.regression = regression.as_ref().map(|r| r.report.clone());

    PipelineOutput {
        report,
        fold,
        reliability,
        spam,
        aggregates,
        dataset,
        regression,
    }
}

/// Efficiency of every participant whose labels can be scored against the
/// experts; `None` when nobody qualifies.
fn efficiency_summary(
    input: &PipelineInput<'_>,
    spam: &SpamFilterOutcome,
    experts: &ExpertLabelSet,
) -> Option<EfficiencySummary> {
    let sentence_article: HashMap<SentenceId, ArticleId> = input
        .articles
        .iter()
        .flat_map(|a| a.sentences.iter().map(|s| (s.sentence_id.clone(), a.article_id.clone())))
        .collect();
    let time = active_seconds(input.events, &sentence_article, input.article_opens);
    let engaged = engagement_by_session(input.events);

    let mut per_annotator: BTreeMap<usize, crate::metrics::ConfusionCounts> = BTreeMap::new();
    for (u, a, label) in spam.matrix.cells() {
        if let Some(&truth) = experts.labels.get(&spam.matrix.units()[u]) {
            per_annotator.entry(a).or_default().add(label, truth);
        }
    }
    let participants: Vec<ParticipantActivity> = per_annotator
        .into_iter()
        .filter_map(|(a, counts)| {
            let session = spam.matrix.annotators()[a].clone();
            let f1 = crate::metrics::f1_score(&counts).ok()?;
            Some(ParticipantActivity {
                engagement: engaged.get(&session).copied().unwrap_or(0),
                active_seconds: time.get(&session).copied().unwrap_or(0.0),
                f1,
                session_id: session,
            })
        })
        .collect();
    let outcome = efficiency(&participants).ok()?;
    Some(EfficiencySummary {
        mean: outcome.mean,
        sd: outcome.sd,
        participants: outcome.per_participant.len(),
        excluded: outcome.excluded.len(),
    })
}
