//! REST routes.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::header::{self, HeaderMap, HeaderValue};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

use biasfeed_core::ingest::RawArticleDoc;
use biasfeed_core::model::{ArticleId, SessionId};

use crate::error::ServiceError;
use crate::platform::{ExportFormat, FeedbackRequest, Platform, RequestMeta, SurveyRequest};
use crate::records::AnalyticsKind;

pub const SESSION_COOKIE: &str = "biasfeed_session";

pub fn router(platform: Arc<Platform>) -> Router {
    Router::new()
        .route("/api/articles", get(list_articles))
        .route("/api/articles/{id}", get(article))
        .route("/api/session/enroll", post(enroll))
        .route("/api/feedback", post(feedback))
        .route("/api/recommendations", get(recommendations))
        .route("/api/survey", post(survey))
        .route("/api/events", post(events))
        .route("/api/experiment/attention", get(attention_question).post(attention))
        .route("/api/experiment/trust", post(trust))
        .route("/api/admin/report", get(report))
        .route("/api/admin/export", get(export))
        .route("/api/admin/ingest", post(ingest))
        .with_state(platform)
}

type Shared = State<Arc<Platform>>;

/// Runs a platform call off the async workers; writes fsync and reports
/// can take a while.
async fn blocking<T, F>(platform: Arc<Platform>, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&Platform) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&platform))
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

fn cookie_session(headers: &HeaderMap) -> Option<SessionId> {
    headers
        .get_all(header::COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|pair| pair.trim().split_once('='))
        .find(|(name, _)| *name == SESSION_COOKIE)
        .map(|(_, value)| SessionId::from(value.trim()))
        .filter(|s| !s.as_str().is_empty())
}

fn require_session(headers: &HeaderMap) -> Result<SessionId, ServiceError> {
    cookie_session(headers).ok_or(ServiceError::NoSession)
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_owned())
}

fn header_str(headers: &HeaderMap, name: &str) -> Option<String> {
    headers.get(name).and_then(|v| v.to_str().ok()).map(str::to_owned)
}

async fn list_articles(State(p): Shared, headers: HeaderMap) -> Response {
    Json(p.articles(cookie_session(&headers).as_ref())).into_response()
}

async fn article(State(p): Shared, Path(id): Path<String>, headers: HeaderMap) -> Result<Response, ServiceError> {
    let session = cookie_session(&headers);
    Ok(Json(p.article_view(&ArticleId::from(id), session.as_ref())?).into_response())
}

async fn enroll(State(p): Shared, headers: HeaderMap) -> Result<Response, ServiceError> {
    let existing = cookie_session(&headers);
    let enrollment = blocking(p, move |p| p.enroll(existing.as_ref())).await?;
    let cookie = format!(
        "{SESSION_COOKIE}={}; Path=/; HttpOnly; SameSite=Lax; Max-Age=31536000",
        enrollment.session_id
    );
    let mut response = Json(enrollment).into_response();
    response.headers_mut().insert(
        header::SET_COOKIE,
        HeaderValue::from_str(&cookie).map_err(|e| ServiceError::Internal(e.to_string()))?,
    );
    Ok(response)
}

async fn feedback(
    State(p): Shared,
    headers: HeaderMap,
    Json(req): Json<FeedbackRequest>,
) -> Result<Response, ServiceError> {
    let session = require_session(&headers)?;
    let ack = blocking(p, move |p| p.post_feedback(&session, req)).await?;
    Ok(Json(ack).into_response())
}

#[derive(Debug, Deserialize)]
struct RecommendationQuery {
    article_id: Option<String>,
    k: Option<usize>,
}

async fn recommendations(State(p): Shared, headers: HeaderMap, Query(q): Query<RecommendationQuery>) -> Response {
    let session = cookie_session(&headers);
    let current = q.article_id.map(ArticleId::from);
    Json(p.recommendations(session.as_ref(), current.as_ref(), q.k.unwrap_or(3).min(50))).into_response()
}

async fn survey(State(p): Shared, headers: HeaderMap, Json(req): Json<SurveyRequest>) -> Result<Response, ServiceError> {
    let session = require_session(&headers)?;
    blocking(p, move |p| p.survey(&session, req)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventRequest {
    kind: AnalyticsKind,
    #[serde(default)]
    page: String,
}

async fn events(State(p): Shared, headers: HeaderMap, Json(req): Json<EventRequest>) -> Result<Response, ServiceError> {
    let session = require_session(&headers)?;
    let meta = RequestMeta {
        country: header_str(&headers, "x-country"),
        user_agent: header_str(&headers, header::USER_AGENT.as_str()),
        accept_language: header_str(&headers, header::ACCEPT_LANGUAGE.as_str()),
    };
    blocking(p, move |p| p.analytics(&session, req.kind, &req.page, &meta)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn attention_question(State(p): Shared) -> Response {
    Json(p.attention_question()).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttentionRequest {
    answer_id: String,
}

async fn attention(
    State(p): Shared,
    headers: HeaderMap,
    Json(req): Json<AttentionRequest>,
) -> Result<Response, ServiceError> {
    let session = require_session(&headers)?;
    Ok(Json(blocking(p, move |p| p.attention(&session, &req.answer_id)).await?).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrustRequest {
    usable: bool,
}

async fn trust(State(p): Shared, headers: HeaderMap, Json(req): Json<TrustRequest>) -> Result<Response, ServiceError> {
    let session = require_session(&headers)?;
    Ok(Json(blocking(p, move |p| p.trust(&session, req.usable)).await?).into_response())
}

async fn report(State(p): Shared, headers: HeaderMap) -> Result<Response, ServiceError> {
    p.check_admin(bearer(&headers).as_deref())?;
    Ok(Json(blocking(p, |p| Ok(p.report())).await?).into_response())
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(State(p): Shared, headers: HeaderMap, Query(q): Query<ExportQuery>) -> Result<Response, ServiceError> {
    p.check_admin(bearer(&headers).as_deref())?;
    let format = ExportFormat::parse(q.format.as_deref().unwrap_or("csv"))?;
    let body = blocking(p, move |p| Ok(p.export(format))).await?;
    Ok(([(header::CONTENT_TYPE, format.content_type())], body).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IngestRequest {
    articles: Vec<RawArticleDoc>,
    #[serde(default)]
    force: bool,
}

async fn ingest(State(p): Shared, headers: HeaderMap, Json(req): Json<IngestRequest>) -> Result<Response, ServiceError> {
    p.check_admin(bearer(&headers).as_deref())?;
    let report = blocking(p, move |p| Ok(p.ingest(&req.articles, req.force))).await?;
    let status = if report.failures.is_empty() { StatusCode::OK } else { StatusCode::MULTI_STATUS };
    Ok((status, Json(report)).into_response())
}
