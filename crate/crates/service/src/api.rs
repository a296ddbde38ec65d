use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use fairforge::stakeholders::{metric_descriptors, stakeholder_presets};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::registry::Registry;
use crate::store::{Inserted, JobKind, JobState};
use crate::{AppState, Plan};

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub progress: Option<f64>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            field: None,
            progress: None,
        }
    }

    fn validation(field: Option<String>, message: impl Into<String>) -> Self {
        ApiError {
            field,
            ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation_error", message)
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitRequest {
    pub kind: JobKind,
    pub payload: Value,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

pub(crate) fn routes() -> Router<AppState> {
    Router::new()
        .route("/v1/datasets", get(list_datasets))
        .route("/v1/jobs", get(list_jobs).post(submit_job))
        .route("/v1/jobs/{id}", get(get_job))
        .route("/v1/jobs/{id}/frontier", get(get_frontier))
        .route("/v1/metrics", get(list_metrics))
        .route("/v1/stakeholders", get(list_stakeholders))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
}

fn path_of(path: &serde_path_to_error::Path, prefix: &str) -> Option<String> {
    let p = path.to_string();
    match (p.as_str(), prefix) {
        (".", "") => None,
        (".", pre) => Some(pre.to_string()),
        (p, "") => Some(p.to_string()),
        (p, pre) => Some(format!("{pre}.{p}")),
    }
}

fn from_value<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> Result<T, ApiError> {
    serde_path_to_error::deserialize(value)
        .map_err(|e| ApiError::validation(path_of(e.path(), prefix), e.inner().to_string()))
}

fn core_error(err: fairforge::Error) -> ApiError {
    match err {
        fairforge::Error::InvalidConfig { field, message } => {
            ApiError::validation(Some(format!("payload.{field}")), message)
        }
        other => ApiError::validation(None, other.to_string()),
    }
}

/// Turns a job payload into a validated plan, replacing a registry name in
/// `dataset` with the registered reference.
pub(crate) fn resolve_plan(registry: &Registry, kind: JobKind, mut payload: Value) -> Result<Plan, ApiError> {
    if let Some(Value::String(name)) = payload.get("dataset") {
        let Some(dataset) = registry.get(name) else {
            return Err(ApiError::validation(
                Some("payload.dataset".into()),
                format!("unknown dataset `{name}`; registered: {:?}", registry.names()),
            ));
        };
        let dataset = serde_json::to_value(dataset).map_err(|e| ApiError::internal(e.to_string()))?;
        payload["dataset"] = dataset;
    }
    let plan = match kind {
        JobKind::Train => Plan::Train(from_value(payload, "payload")?),
        JobKind::LambdaSweep => Plan::LambdaSweep(from_value(payload, "payload")?),
        JobKind::AlphaSweep => Plan::AlphaSweep(from_value(payload, "payload")?),
        JobKind::ConsensusSweep => Plan::Consensus(from_value(payload, "payload")?),
        JobKind::StakeholderSearch => Plan::Search(from_value(payload, "payload")?),
    };
    match &plan {
        Plan::Train(p) => p.validate(),
        Plan::LambdaSweep(p) => {
            if p.is_alpha() {
                return Err(ApiError::validation(
                    Some("payload.alpha_grid".into()),
                    "a lambda_sweep takes no alpha_grid; submit an alpha_sweep",
                ));
            }
            p.validate()
        }
        Plan::AlphaSweep(p) => {
            if !p.is_alpha() {
                return Err(ApiError::validation(Some("payload.alpha_grid".into()), "required for an alpha_sweep"));
            }
            p.validate()
        }
        Plan::Consensus(p) => p.validate(),
        Plan::Search(p) => p.validate(),
    }
    .map_err(core_error)?;
    Ok(plan)
}

async fn list_datasets(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    let registry = state.registry.clone();
    let (datasets, load_errors) = tokio::task::spawn_blocking(move || registry.summaries())
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let mut diagnostics = state.registry.diagnostics.clone();
    diagnostics.extend(load_errors);
    Ok(Json(json!({ "datasets": datasets, "diagnostics": diagnostics })))
}

async fn submit_job(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(&body);
    let req: SubmitRequest = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        if e.inner().classify() == serde_json::error::Category::Data {
            ApiError::validation(path_of(e.path(), ""), e.inner().to_string())
        } else {
            ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.inner().to_string())
        }
    })?;
    let plan = resolve_plan(&state.registry, req.kind, req.payload.clone())?;
    let inserted = state
        .store
        .insert(req.kind, req.payload, req.idempotency_key)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    match inserted {
        Inserted::New(record) => {
            log::info!("accepted {} job {}", record.kind.as_str(), record.id);
            state.spawn_job(record.id.clone(), plan);
            Ok((StatusCode::ACCEPTED, Json(record)).into_response())
        }
        Inserted::Existing(record) => Ok((StatusCode::OK, Json(record)).into_response()),
        Inserted::Conflict(record) => Err(ApiError::new(
            StatusCode::CONFLICT,
            "idempotency_conflict",
            format!("idempotency key already used by job {} with a different request", record.id),
        )),
    }
}

async fn list_jobs(State(state): State<AppState>) -> Json<Value> {
    Json(json!({ "jobs": state.store.list() }))
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let record = state
        .store
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("no job `{id}`")))?;
    Ok(Json(record).into_response())
}

async fn get_frontier(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let record = state
        .store
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("no job `{id}`")))?;
    match record.state {
        JobState::Queued | JobState::Running => Err(ApiError {
            progress: Some(record.progress),
            ..ApiError::new(
                StatusCode::CONFLICT,
                "not_ready",
                format!("job is {}", if record.state == JobState::Queued { "queued" } else { "running" }),
            )
        }),
        JobState::Failed => Err(ApiError::new(
            StatusCode::CONFLICT,
            "job_failed",
            record.error.unwrap_or_else(|| "job failed".into()),
        )),
        JobState::Done => {
            let path = state
                .frontier_path(&record)
                .ok_or_else(|| ApiError::internal("finished job has no result"))?;
            let bytes = tokio::fs::read(&path)
                .await
                .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
            Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
        }
    }
}

async fn list_metrics() -> Json<Value> {
    Json(json!({ "metrics": metric_descriptors() }))
}

async fn list_stakeholders() -> Json<Value> {
    Json(json!({ "stakeholders": stakeholder_presets() }))
}
