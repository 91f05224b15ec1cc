//! JSON-over-HTTP API.
//!
//! | route              | auth | purpose                                      |
//! |--------------------|------|----------------------------------------------|
//! | `POST /users`      | no   | register                                     |
//! | `POST /sessions`   | no   | log in, get a bearer token                   |
//! | `GET /search?q=`   | yes  | personalized results; logs the search        |
//! | `POST /events`     | yes  | report a click with its dwell interval       |
//! | `GET /patterns`    | yes  | mine click sessions (`algo`, `min_sup`, `user`) |
//!
//! Errors are `{"error": code, "message": text}`. Every request works on a
//! single store snapshot taken when it starts.

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::QueryRejection;
use axum::extract::{FromRequest, FromRequestParts, Query, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::HashMap;
use tower_http::services::ServeDir;

use crate::error::Error;
use crate::index::DocId;
use crate::miner::{self, MinSupport, Weighting, DEFAULT_SESSION_GAP_SECS};
use crate::ranker::{personalized_search, RankedResult, DEFAULT_FLOOR};
use crate::store::{EventId, NewEvent, NewUser, Store, UserId};
use crate::Timestamp;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs() as Timestamp)
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub floor: f64,
    pub session_gap_secs: i64,
    /// Static files served at `/` when set.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            floor: DEFAULT_FLOOR,
            session_gap_secs: DEFAULT_SESSION_GAP_SECS,
            ui_dir: None,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub config: Arc<ServiceConfig>,
    pub clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(store: Arc<Store>, config: ServiceConfig) -> Self {
        AppState {
            store,
            config: Arc::new(config),
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_argument", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::InvalidArgument(_) => (StatusCode::BAD_REQUEST, "invalid_argument"),
            Error::EmptyQuery => (StatusCode::BAD_REQUEST, "empty_query"),
            Error::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            Error::Reference(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::AuthFailure => (StatusCode::UNAUTHORIZED, "auth_failed"),
            Error::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized"),
            Error::Corrupt { .. } | Error::Io { .. } | Error::Json(_) => {
                tracing::error!("request failed: {e}");
                return Self::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "internal",
                    "internal error",
                );
            }
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.code, "message": self.message })),
        )
            .into_response()
    }
}

/// `Json` with malformed or incomplete bodies reported as 400.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rejection) => Err(ApiError::bad_request(rejection.body_text())),
        }
    }
}

/// The user behind a valid `Authorization: Bearer` token.
pub struct AuthUser(pub UserId);

impl FromRequestParts<AppState> for AuthUser {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        state: &AppState,
    ) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .ok_or(Error::Unauthorized)?;
        Ok(AuthUser(
            state.store.validate_token(token, state.clock.now())?,
        ))
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, Error> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

fn params(
    q: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Result<HashMap<String, String>, ApiError> {
    q.map(|Query(m)| m)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn create_user(
    State(state): State<AppState>,
    ApiJson(new): ApiJson<NewUser>,
) -> Result<impl IntoResponse, ApiError> {
    let store = Arc::clone(&state.store);
    let user_id = blocking(move || store.register_user(&new)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "user_id": user_id }))))
}

#[derive(Deserialize)]
struct Credentials {
    username: String,
    password: String,
}

async fn create_session(
    State(state): State<AppState>,
    ApiJson(creds): ApiJson<Credentials>,
) -> Result<impl IntoResponse, ApiError> {
    let store = Arc::clone(&state.store);
    let now = state.clock.now();
    let session =
        blocking(move || store.authenticate(&creds.username, &creds.password, now)).await?;
    Ok(Json(session))
}

async fn search(
    State(state): State<AppState>,
    AuthUser(user_id): AuthUser,
    query: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Result<Json<Vec<RankedResult>>, ApiError> {
    let params = params(query)?;
    let q = params.get("q").map(String::as_str).unwrap_or_default();
    let snapshot = state.store.snapshot();
    let results = personalized_search(&snapshot, user_id, q, state.config.floor)?;
    let now = state.clock.now();
    state.store.append_event(&NewEvent {
        user_id,
        query: q.to_owned(),
        doc_id: None,
        clicked_at: now,
        left_at: now,
    })?;
    Ok(Json(results))
}

#[derive(Deserialize)]
struct EventBody {
    query: String,
    doc_id: DocId,
    clicked_at: Timestamp,
    left_at: Timestamp,
}

#[derive(Serialize)]
struct EventCreated {
    event_id: EventId,
}

async fn post_event(
    State(state): State<AppState>,
    AuthUser(user_id): AuthUser,
    ApiJson(body): ApiJson<EventBody>,
) -> Result<impl IntoResponse, ApiError> {
    let event_id = state.store.append_event(&NewEvent {
        user_id,
        query: body.query,
        doc_id: Some(body.doc_id),
        clicked_at: body.clicked_at,
        left_at: body.left_at,
    })?;
    Ok((StatusCode::CREATED, Json(EventCreated { event_id })))
}

async fn patterns(
    State(state): State<AppState>,
    AuthUser(user_id): AuthUser,
    query: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Result<Response, ApiError> {
    let params = params(query)?;
    let algo: Weighting = params.get("algo").map_or("gsp", String::as_str).parse()?;
    let min_sup: MinSupport = params
        .get("min_sup")
        .ok_or_else(|| ApiError::bad_request("min_sup is required"))?
        .parse()?;
    let user = match params.get("user").map(String::as_str) {
        None | Some("") => Some(user_id),
        Some("all") => None,
        Some(id) => Some(UserId(id.parse().map_err(|_| {
            ApiError::bad_request(format!("user must be a user id or \"all\", got {id:?}"))
        })?)),
    };

    let snapshot = state.store.snapshot();
    let config = Arc::clone(&state.config);
    let body = blocking(move || {
        let sequences = miner::sequences_from_snapshot(&snapshot, user, config.session_gap_secs)?;
        let ctx = miner::snapshot_context(&snapshot, config.floor)?;
        let threshold = min_sup.resolve(sequences.len());
        miner::mine(&sequences, threshold, algo, &ctx)?.to_ndjson()
    })
    .await?;
    Ok(([(CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(state: AppState) -> Router {
    let mut router = Router::new()
        .route("/users", post(create_user))
        .route("/sessions", post(create_session))
        .route("/search", get(search))
        .route("/events", post(post_event))
        .route("/patterns", get(patterns));
    if let Some(dir) = state.config.ui_dir.as_ref().filter(|d| d.is_dir()) {
        router = router.fallback_service(ServeDir::new(dir));
    }
    router.with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve<F>(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: F,
) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
}
