#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use biasfeed_core::classifier::BaselineClassifier;
use biasfeed_core::ingest::{article_files, read_doc, RawArticleDoc};
use biasfeed_core::replay::{ReplayBundle, ReplayData};
use biasfeed_core::Config;
use biasfeed_service::store::MemoryStore;
use biasfeed_service::Platform;

pub const TOKEN: &str = "test-admin-token";

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/replay")
}

pub fn fixture_docs() -> Vec<RawArticleDoc> {
    article_files(&fixture_dir().join("articles"))
        .unwrap()
        .iter()
        .map(|p| read_doc(p).unwrap())
        .collect()
}

pub fn fixture_data(with_experts: bool) -> ReplayData {
    let root = fixture_dir();
    ReplayBundle {
        articles: root.join("articles"),
        annotations: root.join("annotations.csv"),
        experts: with_experts.then(|| root.join("experts.csv")),
    }
    .load(&Config::default().replay, &BaselineClassifier::default())
    .unwrap()
}

pub fn config(experiment: bool) -> Config {
    let mut config = Config::default();
    config.experiment.enabled = experiment;
    config.admin.token = Some(TOKEN.into());
    config.regression.samples = 0;
    config.bootstrap.iterations = 1000;
    config
}

/// A platform over an in-memory store, with `n` fixture articles ingested.
pub fn platform(experiment: bool, n: usize) -> Arc<Platform> {
    let p = Platform::with_store(config(experiment), Box::new(MemoryStore::default())).unwrap();
    let docs = fixture_docs();
    let report = p.ingest(&docs[..n], false);
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    Arc::new(p)
}

pub struct Client {
    pub app: Router,
    pub cookie: Option<String>,
}

pub struct Reply {
    pub status: StatusCode,
    pub set_cookie: Option<String>,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }
}

impl Client {
    pub fn new(platform: Arc<Platform>) -> Self {
        Self {
            app: biasfeed_service::http::router(platform),
            cookie: None,
        }
    }

    pub async fn send(&self, req: Request<Body>) -> Reply {
        let response = self.app.clone().oneshot(req).await.unwrap();
        let status = response.status();
        let set_cookie = response
            .headers()
            .get(header::SET_COOKIE)
            .map(|v| v.to_str().unwrap().to_owned());
        let bytes = response.into_body().collect().await.unwrap().to_bytes();
        Reply {
            status,
            set_cookie,
            body: String::from_utf8(bytes.to_vec()).unwrap(),
        }
    }

    fn builder(&self, method: &str, uri: &str) -> axum::http::request::Builder {
        let mut b = Request::builder().method(method).uri(uri);
        if let Some(c) = &self.cookie {
            b = b.header(header::COOKIE, format!("biasfeed_session={c}"));
        }
        b
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.send(self.builder("GET", uri).body(Body::empty()).unwrap()).await
    }

    pub async fn post(&self, uri: &str, body: serde_json::Value) -> Reply {
        self.send(
            self.builder("POST", uri)
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(body.to_string()))
                .unwrap(),
        )
        .await
    }

    pub async fn admin_get(&self, uri: &str) -> Reply {
        self.send(
            self.builder("GET", uri)
                .header(header::AUTHORIZATION, format!("Bearer {TOKEN}"))
                .body(Body::empty())
                .unwrap(),
        )
        .await
    }

    /// Enrolls and keeps the cookie.
    pub async fn enroll(&mut self) -> serde_json::Value {
        let reply = self.post("/api/session/enroll", serde_json::json!({})).await;
        assert_eq!(reply.status, StatusCode::OK, "{}", reply.body);
        let json = reply.json();
        self.cookie = Some(json["session_id"].as_str().unwrap().to_owned());
        json
    }
}
