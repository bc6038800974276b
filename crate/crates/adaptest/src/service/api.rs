use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ApiError, ApiResult, ConfigOverrides, Service};
use crate::formats::transcript_jsonl;

pub const ADMIN_HEADER: &str = "x-admin-token";

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::UnknownBank(_) | ApiError::UnknownSession => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::ResultsHidden => StatusCode::FORBIDDEN,
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::Internal(detail) => {
                tracing::error!(detail, "request failed");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (status, Json(body)).into_response()
    }
}

/// Runs `f` off the async workers, since it may block on fsync.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::Unprocessable(e.body_text()))
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/v1/sessions", post(create_session))
        .route("/api/v1/sessions/{id}", get(get_session))
        .route("/api/v1/sessions/{id}/answers", post(submit_answer))
        .route("/api/v1/sessions/{id}/result", get(get_result))
        .route("/api/v1/banks", get(list_banks))
        .route("/api/v1/admin/sessions", get(list_sessions))
        .route("/api/v1/admin/sessions/{id}/transcript", get(get_transcript))
        .with_state(service)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub bank_id: String,
    #[serde(default)]
    pub config_overrides: Option<ConfigOverrides>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitAnswer {
    pub item_id: String,
    pub selected_index: usize,
}

async fn create_session(
    State(svc): State<Arc<Service>>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let req = body(payload)?;
    let created = blocking(move || svc.create_session(&req.bank_id, req.config_overrides)).await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_session(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.session_view(&id)?))
}

async fn submit_answer(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    payload: Result<Json<SubmitAnswer>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let req = body(payload)?;
    let accepted = blocking(move || svc.submit_answer(&id, &req.item_id, req.selected_index)).await?;
    Ok(Json(accepted))
}

async fn get_result(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.result(&id)?))
}

fn admin(svc: &Service, headers: &HeaderMap) -> ApiResult<()> {
    svc.check_admin(headers.get(ADMIN_HEADER).and_then(|v| v.to_str().ok()))
}

async fn list_banks(State(svc): State<Arc<Service>>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    admin(&svc, &headers)?;
    Ok(Json(svc.banks()))
}

#[derive(Debug, Deserialize)]
struct SessionFilter {
    bank_id: Option<String>,
}

async fn list_sessions(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Query(filter): Query<SessionFilter>,
) -> ApiResult<impl IntoResponse> {
    admin(&svc, &headers)?;
    Ok(Json(svc.list_sessions(filter.bank_id.as_deref())))
}

/// The transcript as JSON lines, ready for `adaptest replay`.
async fn get_transcript(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    admin(&svc, &headers)?;
    let events = svc.transcript(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], transcript_jsonl(&events)))
}
