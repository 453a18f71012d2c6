//! HTTP+JSON front of the decision service.
//!
//! The service state sits behind one mutex that is never held across a
//! provider call or a training run; submissions of the same user are
//! additionally serialized end to end so their outcomes follow arrival order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use permassist_core::icl::TextModel;
use permassist_core::service::{train_snapshot, AssistantState, ServiceError, SubmitPlan};
use permassist_core::{DataTypeId, DecisionOption, ParticipantId, PermissionRequest, ToolId, UserProfile};

use crate::store::Store;

/// An RFC 7807 problem document with a stable `code`.
#[derive(Debug)]
pub struct Problem {
    pub status: StatusCode,
    pub code: &'static str,
    pub detail: String,
}

impl Problem {
    pub fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        Self { status, code, detail: detail.into() }
    }
}

impl From<ServiceError> for Problem {
    fn from(e: ServiceError) -> Self {
        let status = match e {
            ServiceError::UnknownUser(_) | ServiceError::UnknownItem(_) | ServiceError::NoSuchRule { .. } => StatusCode::NOT_FOUND,
            ServiceError::AlreadyDecided(_) => StatusCode::CONFLICT,
            ServiceError::InvalidProfile(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::TrainingFailure(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Problem::new(status, e.code(), e.to_string())
    }
}

impl From<crate::store::StoreError> for Problem {
    fn from(e: crate::store::StoreError) -> Self {
        Problem::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", e.to_string())
    }
}

impl IntoResponse for Problem {
    fn into_response(self) -> Response {
        let body = json!({
            "type": format!("urn:permassist:problem:{}", self.code),
            "title": self.status.canonical_reason().unwrap_or("Error"),
            "status": self.status.as_u16(),
            "detail": self.detail,
            "code": self.code,
        });
        (self.status, [(header::CONTENT_TYPE, "application/problem+json")], body.to_string()).into_response()
    }
}

type ApiResult<T> = Result<T, Problem>;

pub struct AppState {
    pub service: Mutex<AssistantState>,
    pub store: Option<Store>,
    pub provider: Arc<dyn TextModel>,
    pub token: String,
    user_locks: Mutex<HashMap<ParticipantId, Arc<tokio::sync::Mutex<()>>>>,
    refresh: tokio::sync::Mutex<()>,
}

impl AppState {
    pub fn new(service: AssistantState, store: Option<Store>, provider: Arc<dyn TextModel>, token: String) -> Self {
        Self {
            service: Mutex::new(service),
            store,
            provider,
            token,
            user_locks: Mutex::new(HashMap::new()),
            refresh: tokio::sync::Mutex::new(()),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, AssistantState> {
        self.service.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn user_lock(&self, user: &ParticipantId) -> Arc<tokio::sync::Mutex<()>> {
        let mut m = self.user_locks.lock().unwrap_or_else(|p| p.into_inner());
        m.entry(user.clone()).or_default().clone()
    }

    fn persist(&self, state: &AssistantState) -> ApiResult<()> {
        if let Some(store) = &self.store {
            store.save(state)?;
        }
        Ok(())
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| Problem::new(StatusCode::BAD_REQUEST, "invalid_body", e.to_string()))
}

async fn require_token(State(app): State<Arc<AppState>>, headers: HeaderMap, req: Request, next: Next) -> Response {
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented != Some(app.token.as_str()) {
        return Problem::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid bearer token").into_response();
    }
    next.run(req).await
}

async fn not_found() -> Problem {
    Problem::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/users", post(create_user))
        .route("/requests", post(submit))
        .route("/pending", get(pending))
        .route("/pending/{id}/decision", post(decide))
        .route("/rules/{user}/{tool}/{data_type}", delete(revoke))
        .route("/history", get(history))
        .route("/metrics", get(metrics))
        .route("/admin/refresh", post(refresh))
        .fallback(not_found)
        .layer(middleware::from_fn_with_state(app.clone(), require_token))
        .with_state(app)
}

async fn create_user(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let profile: UserProfile = parse_body(&body)?;
    let id = profile.participant_id.clone();
    let mut s = app.lock();
    s.register_user(profile)?;
    app.persist(&s)?;
    Ok((StatusCode::CREATED, Json(json!({ "participant_id": id }))))
}

async fn submit(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let request: PermissionRequest = parse_body(&body)?;
    let user_lock = app.user_lock(&request.participant_id);
    let _ordered = user_lock.lock().await;

    let plan = app.lock().plan_submit(&request)?;
    let (prediction, version) = match plan {
        SubmitPlan::Rule(_) => (None, app.lock().model_version),
        SubmitPlan::Predict(job) => {
            let (hybrid, icl) = {
                let s = app.lock();
                (s.config.hybrid, s.config.icl)
            };
            let provider = app.provider.clone();
            let version = job.model_version;
            let outcome = tokio::task::spawn_blocking(move || job.run(provider.as_ref(), hybrid, icl))
                .await
                .map_err(|e| Problem::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
            let prediction = match outcome {
                Ok(p) => Some(p),
                Err(e) => {
                    log::warn!("prediction unavailable, queueing: {e}");
                    None
                }
            };
            (prediction, version)
        }
    };
    let mut s = app.lock();
    let outcome = s.commit_submit(request, prediction, version, Utc::now())?;
    app.persist(&s)?;
    Ok(Json(outcome))
}

#[derive(Deserialize)]
struct UserQuery {
    user: Option<String>,
}

fn required_user(q: &UserQuery) -> ApiResult<ParticipantId> {
    q.user
        .as_deref()
        .filter(|u| !u.is_empty())
        .map(ParticipantId::new)
        .ok_or_else(|| Problem::new(StatusCode::BAD_REQUEST, "missing_parameter", "query parameter `user` is required"))
}

async fn pending(State(app): State<Arc<AppState>>, Query(q): Query<UserQuery>) -> ApiResult<impl IntoResponse> {
    let user = required_user(&q)?;
    let s = app.lock();
    let items: Vec<_> = s.pending(&user)?.into_iter().cloned().collect();
    Ok(Json(items))
}

#[derive(Deserialize)]
struct DecisionBody {
    option: DecisionOption,
}

async fn decide(State(app): State<Arc<AppState>>, Path(id): Path<u64>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let b: DecisionBody = parse_body(&body)?;
    let mut s = app.lock();
    let record = s.decide(id, b.option, Utc::now())?.clone();
    app.persist(&s)?;
    Ok(Json(record))
}

async fn revoke(
    State(app): State<Arc<AppState>>,
    Path((user, tool, data_type)): Path<(String, String, String)>,
) -> ApiResult<impl IntoResponse> {
    let mut s = app.lock();
    let revoked = s.revoke(&ParticipantId::new(&user), &ToolId::new(&tool), &DataTypeId::new(&data_type))?;
    app.persist(&s)?;
    Ok(Json(json!({ "revoked_decisions": revoked })))
}

async fn history(State(app): State<Arc<AppState>>, Query(q): Query<UserQuery>) -> ApiResult<impl IntoResponse> {
    let user = required_user(&q)?;
    let s = app.lock();
    let records: Vec<_> = s.history(&user)?.into_iter().cloned().collect();
    let rules = s.users.get(&user).map(|u| u.standing_rules.clone()).unwrap_or_default();
    Ok(Json(json!({ "participant_id": user, "decisions": records, "standing_rules": rules })))
}

async fn metrics(State(app): State<Arc<AppState>>) -> impl IntoResponse {
    Json(app.lock().metrics())
}

/// Retrains off the lock; the previous model keeps answering until the swap.
async fn refresh(State(app): State<Arc<AppState>>) -> ApiResult<impl IntoResponse> {
    let _one_at_a_time = app.refresh.lock().await;
    let (snapshot, config) = {
        let s = app.lock();
        let snapshot = s.training_snapshot();
        if !s.is_stale(&snapshot) {
            return Ok(Json(s.model_info(false)));
        }
        (snapshot, s.config)
    };
    let (model, snapshot) = tokio::task::spawn_blocking(move || (train_snapshot(&snapshot, &config), snapshot))
        .await
        .map_err(|e| Problem::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let model = model?;
    let mut s = app.lock();
    let info = s.install_model(model, snapshot, Utc::now());
    if let Some(store) = &app.store {
        store.save_model(info.version, &s.model())?;
    }
    app.persist(&s)?;
    Ok(Json(info))
}

pub async fn serve(app: Arc<AppState>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
