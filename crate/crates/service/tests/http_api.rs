//! The REST surface, driven in-process.

mod common;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use serde_json::{json, Value};

use common::{platform, Client};

async fn first_article(client: &Client) -> Value {
    let list = client.get("/api/articles").await.json();
    let id = list[0]["article_id"].as_str().unwrap().to_owned();
    client.get(&format!("/api/articles/{id}")).await.json()
}

fn payload(view: &Value, i: usize, agree: bool) -> Value {
    let s = &view["sentences"][i];
    if s.get("shown_label").is_some() {
        json!({"sentence_id": s["sentence_id"], "verdict": if agree { "agree" } else { "disagree" }})
    } else {
        json!({"sentence_id": s["sentence_id"], "direct_label": if agree { "biased" } else { "not_biased" }})
    }
}

#[tokio::test]
async fn enrollment_without_experiment_has_no_group_and_is_idempotent() {
    let mut client = Client::new(platform(false, 1));
    let first = client.enroll().await;
    assert_eq!(first["group"], "none");
    let again = client.post("/api/session/enroll", json!({})).await;
    assert_eq!(again.json(), first);
    assert!(again.set_cookie.unwrap().starts_with("biasfeed_session="));
}

#[tokio::test]
async fn six_enrollments_rotate_evenly() {
    let p = platform(true, 1);
    let mut counts = std::collections::HashMap::new();
    for _ in 0..6 {
        let mut c = Client::new(p.clone());
        *counts.entry(c.enroll().await["group"].as_str().unwrap().to_owned()).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 3);
    assert!(counts.values().all(|&n| n == 2), "{counts:?}");
}

#[tokio::test]
async fn article_listing_and_not_found() {
    let client = Client::new(platform(false, 3));
    let list = client.get("/api/articles").await.json();
    assert_eq!(list.as_array().unwrap().len(), 3);
    assert_eq!(list[0]["progress"], 0);
    assert_eq!(client.get("/api/articles/nope").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn highlights_view_labels_every_sentence_and_hides_probabilities() {
    let mut client = Client::new(platform(false, 1));
    client.enroll().await;
    let view = first_article(&client).await;
    assert_eq!(view["progress"], 0);
    for s in view["sentences"].as_array().unwrap() {
        let label = s["shown_label"].as_str().unwrap();
        assert!(label == "biased" || label == "not_biased");
        assert!(s.get("p_biased").is_none());
    }
}

#[tokio::test]
async fn feedback_progress_and_overwrite() {
    let mut client = Client::new(platform(false, 1));
    client.enroll().await;
    let view = first_article(&client).await;
    let ack = client.post("/api/feedback", payload(&view, 0, true)).await;
    assert_eq!(ack.status, StatusCode::OK, "{}", ack.body);
    assert_eq!(ack.json()["vote_recorded"], true);
    assert_eq!(ack.json()["progress"], 1);
    let again = client.post("/api/feedback", payload(&view, 0, false)).await.json();
    assert_eq!(again["progress"], 1);
    let view = first_article(&client).await;
    assert_eq!(view["progress"], 1);
    assert_eq!(view["sentences"][0]["your_vote"]["verdict"], "disagree");
}

#[tokio::test]
async fn feedback_errors() {
    let mut client = Client::new(platform(false, 1));
    let view = first_article(&client).await;
    assert_eq!(client.post("/api/feedback", payload(&view, 0, true)).await.status, StatusCode::UNAUTHORIZED);
    client.enroll().await;

    let unknown = client.post("/api/feedback", json!({"sentence_id": "missing", "verdict": "agree"})).await;
    assert_eq!(unknown.status, StatusCode::NOT_FOUND);

    let sid = view["sentences"][0]["sentence_id"].clone();
    let mismatch = client.post("/api/feedback", json!({"sentence_id": sid, "direct_label": "biased"})).await;
    assert_eq!(mismatch.status, StatusCode::UNPROCESSABLE_ENTITY, "{}", mismatch.body);

    let long = client
        .post("/api/feedback", json!({"sentence_id": sid, "verdict": "agree", "reason": "x".repeat(501)}))
        .await;
    assert_eq!(long.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(long.body.contains("500"), "{}", long.body);

    let ok = client
        .post("/api/feedback", json!({"sentence_id": sid, "verdict": "agree", "reason": "x".repeat(500)}))
        .await;
    assert_eq!(ok.status, StatusCode::OK);
}

#[tokio::test]
async fn control_sessions_never_see_labels() {
    let p = platform(true, 3);
    // Third enrollment in rotation lands in control.
    let mut client = Client::new(p.clone());
    for _ in 0..3 {
        client = Client::new(p.clone());
        client.enroll().await;
    }
    let view_reply = {
        let list = client.get("/api/articles").await;
        assert!(!list.body.contains("shown_label"));
        let id = list.json()[0]["article_id"].as_str().unwrap().to_owned();
        client.get(&format!("/api/articles/{id}")).await
    };
    let view = view_reply.json();
    assert_eq!(view["group"], "control");
    assert!(!view_reply.body.contains("shown_label"));
    assert_eq!(view["prompt"], "Is this sentence biased?");
    for i in 0..5 {
        let ack = client.post("/api/feedback", payload(&view, i, i % 2 == 0)).await;
        assert_eq!(ack.status, StatusCode::OK, "{}", ack.body);
        assert!(!ack.body.contains("shown_label"));
    }
    let id = view["article_id"].as_str().unwrap();
    for reply in [
        client.get(&format!("/api/articles/{id}")).await,
        client.get(&format!("/api/recommendations?article_id={id}")).await,
        client.post("/api/session/enroll", json!({})).await,
    ] {
        assert!(!reply.body.contains("shown_label"), "{}", reply.body);
    }
}

#[tokio::test]
async fn comparison_alternates_anchored_and_unanchored() {
    let p = platform(true, 1);
    let mut client = Client::new(p.clone());
    client.enroll().await;
    client = Client::new(p.clone());
    assert_eq!(client.enroll().await["group"], "comparison");
    let view = first_article(&client).await;
    let shown: Vec<bool> = view["sentences"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.get("shown_label").is_some())
        .collect();
    assert!(shown.windows(2).all(|w| w[0] != w[1]), "{shown:?}");
    // Reloading keeps the same pairing.
    assert_eq!(first_article(&client).await, view);
    for i in 0..2 {
        let ack = client.post("/api/feedback", payload(&view, i, true)).await;
        assert_eq!(ack.status, StatusCode::OK, "{}", ack.body);
    }
}

#[tokio::test]
async fn recommendations_rules() {
    let p = platform(false, 12);
    let mut client = Client::new(p.clone());
    client.enroll().await;
    let list = client.get("/api/articles").await.json();
    let ids: Vec<String> = list.as_array().unwrap().iter().map(|a| a["article_id"].as_str().unwrap().into()).collect();

    // Put a vote on the second article so it drops behind the rest.
    let view = client.get(&format!("/api/articles/{}", ids[1])).await.json();
    client.post("/api/feedback", payload(&view, 0, true)).await;
    let rec = client.get(&format!("/api/recommendations?article_id={}", ids[0])).await.json();
    assert_eq!(rec, json!([ids[2], ids[3], ids[4]]));

    let small = platform(false, 3);
    let mut c = Client::new(small.clone());
    c.enroll().await;
    let list = c.get("/api/articles").await.json();
    let ids: Vec<String> = list.as_array().unwrap().iter().map(|a| a["article_id"].as_str().unwrap().into()).collect();
    let rec = c.get(&format!("/api/recommendations?article_id={}", ids[0])).await.json();
    assert_eq!(rec.as_array().unwrap().len(), 2);

    // Complete both others: the fallback still offers them, least annotated first.
    for id in &ids[1..] {
        let view = c.get(&format!("/api/articles/{id}")).await.json();
        for i in 0..view["sentences"].as_array().unwrap().len() {
            c.post("/api/feedback", payload(&view, i, true)).await;
        }
    }
    let view = c.get(&format!("/api/articles/{}", ids[2])).await.json();
    assert_eq!(view["progress"], view["sentences"].as_array().unwrap().len());
    let rec = c.get(&format!("/api/recommendations?article_id={}", ids[0])).await.json();
    assert_eq!(rec, json!([ids[1], ids[2]]));
}

#[tokio::test]
async fn attention_sequences() {
    let p = platform(true, 1);
    let mut client = Client::new(p.clone());
    client.enroll().await;
    let q = client.get("/api/experiment/attention").await.json();
    assert!(q["answers"].to_string().contains("Bias can be both positive, negative or even not have particular sentiment"));

    let pass = client.post("/api/experiment/attention", json!({"answer_id": "positive_negative_or_neutral"})).await.json();
    assert_eq!(pass, json!({"passed": true, "failures": 0, "excluded": false}));

    let mut twice = Client::new(p.clone());
    twice.enroll().await;
    twice.post("/api/experiment/attention", json!({"answer_id": "same_as_negative"})).await;
    let out = twice.post("/api/experiment/attention", json!({"answer_id": "not_connected"})).await.json();
    assert_eq!(out, json!({"passed": false, "failures": 2, "excluded": true}));

    let mut recover = Client::new(p.clone());
    recover.enroll().await;
    recover.post("/api/experiment/attention", json!({"answer_id": "same_as_positive"})).await;
    let out = recover.post("/api/experiment/attention", json!({"answer_id": "positive_negative_or_neutral"})).await.json();
    assert_eq!(out, json!({"passed": true, "failures": 1, "excluded": false}));

    let mut plain = Client::new(platform(false, 1));
    plain.enroll().await;
    let reply = plain.post("/api/experiment/attention", json!({"answer_id": "not_connected"})).await;
    assert_eq!(reply.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn trust_flag_excludes_votes_from_aggregation() {
    let p = platform(true, 1);
    let mut client = Client::new(p.clone());
    client.enroll().await;
    let view = first_article(&client).await;
    for i in 0..3 {
        client.post("/api/feedback", payload(&view, i, true)).await;
    }
    let admin = Client::new(p.clone());
    assert_eq!(admin.admin_get("/api/admin/report").await.json()["counts"]["folded_votes"], 3);

    assert_eq!(client.post("/api/experiment/trust", json!({"usable": true})).await.json()["excluded"], false);
    assert_eq!(admin.admin_get("/api/admin/report").await.json()["counts"]["folded_votes"], 3);

    assert_eq!(client.post("/api/experiment/trust", json!({"usable": false})).await.json()["excluded"], true);
    let report = admin.admin_get("/api/admin/report").await.json();
    assert_eq!(report["counts"]["raw_events"], 3);
    assert_eq!(report["counts"]["folded_votes"], 0);

    // Last answer wins.
    client.post("/api/experiment/trust", json!({"usable": true})).await;
    assert_eq!(admin.admin_get("/api/admin/report").await.json()["counts"]["folded_votes"], 3);
}

#[tokio::test]
async fn admin_requires_token() {
    let client = Client::new(platform(false, 1));
    assert_eq!(client.get("/api/admin/report").await.status, StatusCode::UNAUTHORIZED);
    let wrong = client
        .send(
            Request::get("/api/admin/export?format=csv")
                .header(header::AUTHORIZATION, "Bearer nope")
                .body(Body::empty())
                .unwrap(),
        )
        .await;
    assert_eq!(wrong.status, StatusCode::UNAUTHORIZED);
    let ingest = client.post("/api/admin/ingest", json!({"articles": []})).await;
    assert_eq!(ingest.status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn empty_platform_report() {
    let client = Client::new(platform(false, 0));
    let first = client.admin_get("/api/admin/report").await;
    assert_eq!(first.status, StatusCode::OK);
    let report = first.json();
    for (key, value) in report["counts"].as_object().unwrap() {
        assert_eq!(value, 0, "{key}");
    }
    assert!(report["alpha_error"].as_str().unwrap().contains("undefined"), "{report}");
    assert!(report.get("alpha").is_none());
    assert_eq!(client.admin_get("/api/admin/report").await.body, first.body);
}

#[tokio::test]
async fn export_formats() {
    let client = Client::new(platform(false, 1));
    let csv = client.admin_get("/api/admin/export?format=csv").await;
    assert_eq!(csv.status, StatusCode::OK);
    assert_eq!(csv.body.lines().count(), 1, "header only: {}", csv.body);
    assert_eq!(client.admin_get("/api/admin/export?format=jsonl").await.body, "");
    let xml = client.admin_get("/api/admin/export?format=xml").await;
    assert_eq!(xml.status, StatusCode::BAD_REQUEST);
    assert!(xml.body.contains("xml"));
}

#[tokio::test]
async fn admin_ingest_reports_per_document() {
    let client = Client::new(platform(false, 0));
    let mut docs = serde_json::to_value(&common::fixture_docs()[..2]).unwrap();
    let mut broken = docs[0].clone();
    broken["body"] = json!("   ");
    broken["source_url"] = json!("https://news.example.org/broken");
    docs.as_array_mut().unwrap().push(broken);
    let reply = client
        .send(
            Request::post("/api/admin/ingest")
                .header(header::AUTHORIZATION, format!("Bearer {}", common::TOKEN))
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(json!({"articles": docs}).to_string()))
                .unwrap(),
        )
        .await;
    assert_eq!(reply.status, StatusCode::MULTI_STATUS);
    let report = reply.json();
    assert_eq!(report["articles"], 2);
    assert_eq!(report["failures"][0]["path"], "https://news.example.org/broken");
    assert_eq!(client.get("/api/articles").await.json().as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn survey_and_events() {
    let mut client = Client::new(platform(false, 1));
    assert_eq!(client.post("/api/survey", json!({})).await.status, StatusCode::UNAUTHORIZED);
    client.enroll().await;
    assert_eq!(client.post("/api/survey", json!({})).await.status, StatusCode::NO_CONTENT);
    let ok = client
        .post("/api/survey", json!({"ease_of_use": 8, "nps": 0, "answers": {"like": "the highlights"}}))
        .await;
    assert_eq!(ok.status, StatusCode::NO_CONTENT, "{}", ok.body);
    assert_eq!(client.post("/api/survey", json!({"ease_of_use": 11})).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(client.post("/api/survey", json!({"answers": {"favourite_colour": "x"}})).await.status, StatusCode::UNPROCESSABLE_ENTITY);

    let ev = client.post("/api/events", json!({"kind": "page_view", "page": "/"})).await;
    assert_eq!(ev.status, StatusCode::NO_CONTENT);
    let bad = client.post("/api/events", json!({"kind": "keystroke", "page": "/"})).await;
    assert!(bad.status.is_client_error());
}
