use std::path::PathBuf;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use contract_lineage::triage::TriageSession;
use contract_lineage::workspace::{PipelineOptions, Workspace};
use contract_lineage::{Address, EmbedConfig, UpgradePair};
use contract_lineage_cli::api;
use serde_json::{json, Value};
use tower::ServiceExt;

fn addr(n: usize) -> Address {
    Address::parse(&format!("0x{n:040x}")).unwrap()
}

fn pairs(n: usize) -> Vec<UpgradePair> {
    (0..n)
        .map(|i| UpgradePair {
            predecessor: addr(2 * i + 1),
            successor: addr(2 * i + 2),
            similarity: 0.7 + i as f64 / 100.0,
            successor_destructed: false,
        })
        .collect()
}

fn app(session: TriageSession, path: Option<PathBuf>) -> Router {
    api::router(api::shared(session, path), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn ids(cards: &Value) -> Vec<String> {
    cards
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["id"].as_str().unwrap().to_string())
        .collect()
}

#[tokio::test]
async fn session_summary_and_filters() {
    let app = app(TriageSession::create(&pairs(10), 7, 0.2).unwrap(), None);
    let (status, s) = call(&app, "GET", "/api/session", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["phase"], "iteration1");
    assert_eq!(s["counts"]["total"], 10);
    assert_eq!(s["counts"]["iteration1"], 2);
    assert_eq!(s["sample_fraction"], 0.2);
    assert_eq!(s["seed"], 7);

    let (_, first) = call(&app, "GET", "/api/cards?iteration=1", None).await;
    assert_eq!(ids(&first).len(), 2);
    let (_, second) = call(&app, "GET", "/api/cards?iteration=2&state=unlabeled", None).await;
    assert_eq!(ids(&second).len(), 8);
    let (_, none) = call(&app, "GET", "/api/cards?state=labeled", None).await;
    assert!(ids(&none).is_empty());
}

#[tokio::test]
async fn full_protocol_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.json");
    let session = TriageSession::create(&pairs(5), 3, 0.4).unwrap();
    session.save(&path).unwrap();
    let app = app(session, Some(path.clone()));

    let (status, created) = call(
        &app,
        "POST",
        "/api/categories",
        Some(json!({"title": "Unchecked External Call", "description": "send result ignored", "actor": "ana"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(created["revision"], 1);
    let cat = created["category_id"].as_str().unwrap().to_string();

    let (status, dup) = call(
        &app,
        "POST",
        "/api/categories",
        Some(json!({"title": "unchecked external call", "actor": "ben"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(dup["error"], "duplicate_title");

    let (_, first) = call(&app, "GET", "/api/cards?iteration=1", None).await;
    let (_, second) = call(&app, "GET", "/api/cards?iteration=2", None).await;
    let first = ids(&first);
    let second = ids(&second);

    // Iteration-2 cards are off limits during iteration 1.
    let (status, _) = call(
        &app,
        "POST",
        &format!("/api/cards/{}/label", second[0]),
        Some(json!({"category_id": cat, "actor": "ana"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, body) = call(&app, "POST", "/api/phase/advance", Some(json!({"actor": "ana"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "unresolved_cards");

    let (status, labeled) = call(
        &app,
        "POST",
        &format!("/api/cards/{}/label", first[0]),
        Some(json!({"category_id": cat, "actor": "ana", "revision": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(labeled["revision"], 2);

    // A write based on an old revision is rejected.
    let (status, stale) = call(
        &app,
        "POST",
        &format!("/api/cards/{}/exclude", first[1]),
        Some(json!({"reason": "refactor only", "actor": "ben", "revision": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(stale["error"], "stale_revision");

    let (status, body) = call(
        &app,
        "POST",
        &format!("/api/cards/{}/exclude", first[1]),
        Some(json!({"reason": "", "actor": "ben"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "empty_reason");

    let (status, _) = call(
        &app,
        "POST",
        &format!("/api/cards/{}/exclude", first[1]),
        Some(json!({"reason": "refactor only", "actor": "ben", "revision": 2})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);

    let (status, adv) = call(&app, "POST", "/api/phase/advance", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(adv["phase"], "iteration2");
    assert_eq!(adv["revision"], 4);

    let (status, _) = call(&app, "GET", "/api/report", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, draft) = call(&app, "GET", "/api/report?draft=true", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(draft["watermark"].is_string());

    for id in &second {
        let (status, _) = call(
            &app,
            "POST",
            &format!("/api/cards/{id}/label"),
            Some(json!({"category_id": cat, "actor": "ben"})),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, adv) = call(&app, "POST", "/api/phase/advance", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(adv["phase"], "complete");

    let (status, report) = call(&app, "GET", "/api/report", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(report["watermark"].is_null());
    assert_eq!(report["categories"][0]["count"], 4);
    assert_eq!(report["excluded"][0]["reason"], "refactor only");

    let (status, _) = call(
        &app,
        "POST",
        "/api/categories",
        Some(json!({"title": "Late", "actor": "ana"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    // Every mutation was persisted and the on-disk log replays to the same state.
    let saved = TriageSession::load(&path).unwrap();
    let (_, live) = call(&app, "GET", "/api/session", None).await;
    assert_eq!(live["revision"], saved.revision);
    assert_eq!(saved.replay().unwrap(), saved);
}

#[tokio::test]
async fn unknown_resources() {
    let app = app(TriageSession::create(&pairs(2), 1, 0.5).unwrap(), None);
    let (status, body) = call(&app, "GET", "/api/cards/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "unknown_card");
    let (_, cards) = call(&app, "GET", "/api/cards?iteration=1", None).await;
    let id = &ids(&cards)[0];
    let (status, body) = call(
        &app,
        "POST",
        &format!("/api/cards/{id}/label"),
        Some(json!({"category_id": "cat-9", "actor": "ana"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "unknown_category");
    let (status, _) = call(&app, "GET", "/index.html", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn card_detail_carries_evidence() {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(dir.path());
    let opts = PipelineOptions {
        seed: 42,
        embed: EmbedConfig {
            dimension: 32,
            ..EmbedConfig::default()
        },
        sample_fraction: 0.5,
        ..PipelineOptions::default()
    };
    ws.run_pipeline(
        &fixtures.join("contracts.json"),
        &fixtures.join("transactions.json"),
        &opts,
    )
    .unwrap();
    let session = ws.session().unwrap();
    let app = app(session.clone(), None);

    let wallet = session
        .cards
        .iter()
        .find(|c| c.pair.predecessor.as_str() == "0xa7b245d25bad24e0c9ca3a4e1142e88083bf64a8")
        .unwrap();
    let (status, card) = call(&app, "GET", &format!("/api/cards/{}", wallet.id), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(card["pred_source"].as_str().unwrap().contains("tx.origin"));
    assert!(card["succ_source"].as_str().unwrap().contains("msg.sender == owner"));
    let regions = card["regions"].as_array().unwrap();
    assert_eq!(regions.len(), 1);
    let pred: Vec<&str> = regions[0]["pred_lines"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l.as_str().unwrap())
        .collect();
    assert!(pred.contains(&"require(tx.origin == owner);"));
    // One changed line plus three lines of context on each side.
    assert_eq!(pred.len(), 7);
    assert_eq!(card["delta"]["fixed"][0]["subtype"], "weak-guard-tx-origin");
    assert!(card["delta"]["introduced"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn serves_static_assets() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>board</h1>").unwrap();
    let app = api::router(
        api::shared(TriageSession::create(&pairs(1), 1, 0.5).unwrap(), None),
        Some(dir.path().to_path_buf()),
    );
    let (status, body) = call(&app, "GET", "/index.html", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, Value::String("<h1>board</h1>".into()));
    let (status, _) = call(&app, "GET", "/api/session", None).await;
    assert_eq!(status, StatusCode::OK);
}
