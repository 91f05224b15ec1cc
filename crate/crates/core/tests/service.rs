mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use common::{card_store, TestApp};
use persearch_core::index::Corpus;
use persearch_core::service::{self, AppState, ServiceConfig};
use persearch_core::store::{Store, StoreConfig};
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};

fn error_code(body: &str) -> String {
    let v: Value = serde_json::from_str(body).unwrap();
    assert!(v["message"].is_string());
    v["error"].as_str().unwrap().to_owned()
}

#[tokio::test]
async fn registration() {
    let app = TestApp::new(card_store());
    let body = json!({"username": "alice", "password": "pw1", "address": "x", "occupation": "y",
                      "qualification": "z", "interests": ["cards"]});
    let (s, b) = app.post("/users", None, body.clone()).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(serde_json::from_str::<Value>(&b).unwrap()["user_id"], 1);

    let (s, b) = app.post("/users", None, body).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(error_code(&b), "conflict");

    let (s, b) = app.post("/users", None, json!({"username": "bob"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&b), "invalid_argument");

    let (s, _) = app
        .post("/users", None, json!({"username": "", "password": "p"}))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn login_failures_are_indistinguishable() {
    let app = TestApp::new(card_store());
    app.login("alice").await;
    let (s1, wrong) = app
        .post(
            "/sessions",
            None,
            json!({"username": "alice", "password": "nope"}),
        )
        .await;
    let (s2, unknown) = app
        .post(
            "/sessions",
            None,
            json!({"username": "nobody", "password": "pw"}),
        )
        .await;
    assert_eq!(s1, StatusCode::UNAUTHORIZED);
    assert_eq!(s2, StatusCode::UNAUTHORIZED);
    assert_eq!(wrong, unknown);
}

#[tokio::test]
async fn protected_routes_need_a_live_token() {
    let app = TestApp::new(card_store());
    let token = app.login("alice").await;
    for path in ["/search?q=card", "/patterns?min_sup=1"] {
        assert_eq!(app.get(path, None).await.0, StatusCode::UNAUTHORIZED);
        assert_eq!(
            app.get(path, Some("bogus")).await.0,
            StatusCode::UNAUTHORIZED
        );
    }
    let ev = json!({"query": "card", "doc_id": 1, "clicked_at": 0, "left_at": 1});
    assert_eq!(
        app.post("/events", None, ev).await.0,
        StatusCode::UNAUTHORIZED
    );

    assert_eq!(
        app.get("/search?q=card", Some(&token)).await.0,
        StatusCode::OK
    );
    app.clock.advance(24 * 3600);
    let (s, b) = app.get("/search?q=card", Some(&token)).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    assert_eq!(error_code(&b), "unauthorized");
}

#[tokio::test]
async fn click_promotes_the_link() {
    let app = TestApp::new(card_store());
    let token = app.login("alice").await;

    let (s, body) = app.get("/search?q=card", Some(&token)).await;
    assert_eq!(s, StatusCode::OK);
    let first: Value = serde_json::from_str(&body).unwrap();
    let ids: Vec<u64> = first
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["doc_id"].as_u64().unwrap())
        .collect();
    assert_eq!(ids, [1, 2, 3]);
    for r in first.as_array().unwrap() {
        assert_eq!(r["score"], 0.0);
        assert!(r["uri"].is_string() && r["title"].is_string() && r["base_strength"].is_u64());
    }

    let now = app.clock.0.load(std::sync::atomic::Ordering::SeqCst);
    let (s, b) = app
        .post(
            "/events",
            Some(&token),
            json!({"query": "Card", "doc_id": 3, "clicked_at": now, "left_at": now + 90}),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED);
    assert!(serde_json::from_str::<Value>(&b).unwrap()["event_id"].is_u64());

    assert_eq!(app.search_ids(&token, "card").await, [3, 1, 2]);

    // Another user still sees the base order.
    let bob = app.login("bob").await;
    assert_eq!(app.search_ids(&bob, "card").await, [1, 2, 3]);

    // Searches are logged as click-less records.
    let snap = app.store.snapshot();
    assert_eq!(snap.search_count(persearch_core::UserId(1), "card"), 2);
}

#[tokio::test]
async fn search_edge_cases() {
    let app = TestApp::new(card_store());
    let token = app.login("alice").await;
    let (s, b) = app.get("/search?q=zzz", Some(&token)).await;
    assert_eq!((s, b.as_str()), (StatusCode::OK, "[]"));
    let (s, b) = app.get("/search?q=the", Some(&token)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&b), "empty_query");
    assert_eq!(
        app.get("/search", Some(&token)).await.0,
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn event_validation() {
    let app = TestApp::new(card_store());
    let token = app.login("alice").await;
    let (s, b) = app
        .post(
            "/events",
            Some(&token),
            json!({"query": "card", "doc_id": 1, "clicked_at": 10, "left_at": 9}),
        )
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&b), "invalid_argument");
    let (s, b) = app
        .post(
            "/events",
            Some(&token),
            json!({"query": "card", "doc_id": 9999, "clicked_at": 1, "left_at": 2}),
        )
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&b), "not_found");
    let (s, _) = app
        .post("/events", Some(&token), json!({"query": "card"}))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

async fn click(app: &TestApp, token: &str, doc: u64, at: i64) {
    let (s, _) = app
        .post(
            "/events",
            Some(token),
            json!({"query": "card", "doc_id": doc, "clicked_at": at, "left_at": at + 30}),
        )
        .await;
    assert_eq!(s, StatusCode::CREATED);
}

#[tokio::test]
async fn pattern_report() {
    let app = TestApp::new(card_store());
    let token = app.login("alice").await;

    let (s, b) = app.get("/patterns?algo=gsp&min_sup=2", Some(&token)).await;
    assert_eq!((s, b.as_str()), (StatusCode::OK, ""));

    // Sessions [1,2,3], [1,3], [2,3], separated by more than the 30-minute gap.
    for (doc, at) in [
        (1, 0),
        (2, 60),
        (3, 120),
        (1, 10_000),
        (3, 10_060),
        (2, 20_000),
        (3, 20_060),
    ] {
        click(&app, &token, doc, at).await;
    }
    let (s, b) = app.get("/patterns?algo=gsp&min_sup=2", Some(&token)).await;
    assert_eq!(s, StatusCode::OK);
    let expected = "{\"items\":[3],\"support\":3.0,\"k\":1}\n\
                    {\"items\":[1],\"support\":2.0,\"k\":1}\n\
                    {\"items\":[2],\"support\":2.0,\"k\":1}\n\
                    {\"items\":[1,3],\"support\":2.0,\"k\":2}\n\
                    {\"items\":[2,3],\"support\":2.0,\"k\":2}\n";
    assert_eq!(b, expected);

    // Percent thresholds resolve against the number of sessions (3).
    let (_, pct) = app
        .get("/patterns?algo=gsp&min_sup=66%25", Some(&token))
        .await;
    assert_eq!(pct, expected);

    // Bob has no clicks of his own, but can mine everyone's.
    let bob = app.login("bob").await;
    assert_eq!(app.get("/patterns?min_sup=2", Some(&bob)).await.1, "");
    assert_eq!(
        app.get("/patterns?min_sup=2&user=all", Some(&bob)).await.1,
        expected
    );
    assert_eq!(
        app.get("/patterns?min_sup=2&user=1", Some(&bob)).await.1,
        expected
    );

    for algo in ["wtgsp", "wmgsp"] {
        let (s, b) = app
            .get(&format!("/patterns?algo={algo}&min_sup=0.5"), Some(&token))
            .await;
        assert_eq!(s, StatusCode::OK);
        assert!(b.lines().count() >= 5, "{algo}: {b}");
    }

    let (s, b) = app
        .get("/patterns?algo=banana&min_sup=2", Some(&token))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&b), "invalid_argument");
    assert_eq!(
        app.get("/patterns?algo=gsp", Some(&token)).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        app.get("/patterns?min_sup=-1", Some(&token)).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        app.get("/patterns?min_sup=1&user=x", Some(&token)).await.0,
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn serves_static_ui_when_present() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>search</h1>").unwrap();
    let config = ServiceConfig {
        ui_dir: Some(dir.path().to_owned()),
        ..Default::default()
    };
    let app = TestApp::with_config(card_store(), config);
    let (s, b) = app.get("/index.html", None).await;
    assert_eq!((s, b.as_str()), (StatusCode::OK, "<h1>search</h1>"));
    let (s, _) = app.get("/", None).await;
    assert_eq!(s, StatusCode::OK);

    let bare = TestApp::new(card_store());
    assert_eq!(bare.get("/", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn serves_over_tcp_and_shuts_down() {
    let store = Arc::new(Store::in_memory(Corpus::default(), StoreConfig::default()));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(service::serve(
        listener,
        AppState::new(store, ServiceConfig::default()),
        async {
            let _ = rx.await;
        },
    ));

    let mut conn = tokio::net::TcpStream::connect(addr).await.unwrap();
    conn.write_all(b"GET /search?q=card HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut resp = String::new();
    conn.read_to_string(&mut resp).await.unwrap();
    assert!(resp.starts_with("HTTP/1.1 401"), "{resp}");

    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}
