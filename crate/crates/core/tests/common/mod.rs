#![allow(dead_code)]

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use persearch_core::index::{Corpus, SourceDocument};
use persearch_core::service::{self, AppState, Clock, ServiceConfig};
use persearch_core::store::{Store, StoreConfig};
use serde_json::Value;
use tower::ServiceExt;

pub struct ManualClock(pub AtomicI64);

impl ManualClock {
    pub fn new(t: i64) -> Arc<Self> {
        Arc::new(ManualClock(AtomicI64::new(t)))
    }

    pub fn advance(&self, secs: i64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> i64 {
        self.0.load(Ordering::SeqCst)
    }
}

pub fn src(uri: &str, body: &str) -> SourceDocument {
    SourceDocument {
        uri: uri.into(),
        title: uri.to_uppercase(),
        body: body.into(),
    }
}

/// Three documents match "card" with strengths 5, 3, 1; a fourth is about games.
pub fn card_corpus() -> Vec<SourceDocument> {
    vec![
        src("d1", "card card card card card deck"),
        src("d2", "card card card atm bank"),
        src("d3", "card game rules"),
        src("d4", "game game chess"),
    ]
}

pub fn card_store() -> Arc<Store> {
    let store = Store::in_memory(Corpus::default(), StoreConfig::default());
    store.ingest(&card_corpus(), 10).unwrap();
    Arc::new(store)
}

pub struct TestApp {
    pub router: Router,
    pub store: Arc<Store>,
    pub clock: Arc<ManualClock>,
}

impl TestApp {
    pub fn new(store: Arc<Store>) -> Self {
        Self::with_config(store, ServiceConfig::default())
    }

    pub fn with_config(store: Arc<Store>, config: ServiceConfig) -> Self {
        let clock = ManualClock::new(1_700_000_000);
        let state = AppState::new(Arc::clone(&store), config).with_clock(clock.clone());
        TestApp {
            router: service::router(state),
            store,
            clock,
        }
    }

    pub async fn send(&self, req: Request<Body>) -> (StatusCode, String) {
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8(bytes.to_vec()).unwrap())
    }

    pub async fn post(&self, path: &str, token: Option<&str>, body: Value) -> (StatusCode, String) {
        let mut req = Request::post(path).header("content-type", "application/json");
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        self.send(req.body(Body::from(body.to_string())).unwrap())
            .await
    }

    pub async fn get(&self, path: &str, token: Option<&str>) -> (StatusCode, String) {
        let mut req = Request::get(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        self.send(req.body(Body::empty()).unwrap()).await
    }

    /// Registers and logs in; returns the bearer token.
    pub async fn login(&self, username: &str) -> String {
        let (s, _) = self
            .post(
                "/users",
                None,
                serde_json::json!({"username": username, "password": "pw", "interests": ["cards"]}),
            )
            .await;
        assert_eq!(s, StatusCode::CREATED);
        let (s, body) = self
            .post(
                "/sessions",
                None,
                serde_json::json!({"username": username, "password": "pw"}),
            )
            .await;
        assert_eq!(s, StatusCode::OK);
        let v: Value = serde_json::from_str(&body).unwrap();
        v["token"].as_str().unwrap().to_owned()
    }

    pub async fn search_ids(&self, token: &str, q: &str) -> Vec<u64> {
        let (s, body) = self.get(&format!("/search?q={q}"), Some(token)).await;
        assert_eq!(s, StatusCode::OK, "{body}");
        let v: Value = serde_json::from_str(&body).unwrap();
        v.as_array()
            .unwrap()
            .iter()
            .map(|r| r["doc_id"].as_u64().unwrap())
            .collect()
    }
}
