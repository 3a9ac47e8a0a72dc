use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CreateSession, ServiceError, SessionManager};
use crate::engine::Feedback;
use crate::sim::{self, SimConfig, SimResult, SweepParam, SweepRow};

/// Largest Monte Carlo run the API accepts per point.
pub const MAX_SIM_TASKS: u64 = 10_000_000;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = match &self {
            ServiceError::Backend { session_id, .. } => {
                json!({"error": self.to_string(), "session_id": session_id})
            }
            _ => json!({"error": self.to_string()}),
        };
        (status, Json(body)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid JSON body: {e}")))
}

async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker panicked: {e}")))?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    #[serde(flatten)]
    pub config: SimConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Include the sweep rows rendered as CSV.
    #[serde(default)]
    pub csv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub simulated: SimResult,
    pub analytic: SimResult,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<SweepRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

fn run_simulation(request: SimulateRequest) -> Result<SimulateResponse, ServiceError> {
    let config = request.config;
    config.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    if config.num_tasks > MAX_SIM_TASKS {
        return Err(ServiceError::BadRequest(format!("num_tasks is limited to {MAX_SIM_TASKS}")));
    }
    let rows = match &request.sweep {
        Some(spec) => {
            let param: SweepParam = spec.param.parse().map_err(|e: sim::SimError| ServiceError::BadRequest(e.to_string()))?;
            sim::sweep(&config, param, &spec.values).map_err(|e| ServiceError::BadRequest(e.to_string()))?
        }
        None => Vec::new(),
    };
    let csv = if request.csv {
        let mut buf = Vec::new();
        sim::write_csv(&rows, &mut buf).map_err(|e| ServiceError::Internal(e.to_string()))?;
        Some(String::from_utf8(buf).map_err(|e| ServiceError::Internal(e.to_string()))?)
    } else {
        None
    };
    Ok(SimulateResponse {
        simulated: sim::simulate(&config),
        analytic: sim::analytic(&config),
        rows,
        csv,
    })
}

async fn create(State(m): State<Arc<SessionManager>>, body: Bytes) -> Result<Response, ServiceError> {
    let request: CreateSession = parse(&body)?;
    let view = blocking(move || m.create(request)).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn list(State(m): State<Arc<SessionManager>>) -> Result<Response, ServiceError> {
    let sessions = blocking(move || Ok(m.list())).await?;
    Ok(Json(sessions).into_response())
}

async fn show(State(m): State<Arc<SessionManager>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let view = blocking(move || m.get(&id)).await?;
    Ok(Json(view).into_response())
}

async fn trace(State(m): State<Arc<SessionManager>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let events = blocking(move || m.trace(&id)).await?;
    Ok(Json(events).into_response())
}

async fn feedback(
    State(m): State<Arc<SessionManager>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let mut value: serde_json::Value = parse(&body)?;
    if let Some(obj) = value.as_object_mut() {
        obj.entry("session_id").or_insert_with(|| json!(id));
    }
    let feedback: Feedback =
        serde_json::from_value(value).map_err(|e| ServiceError::BadRequest(format!("invalid feedback: {e}")))?;
    if feedback.session_id != id {
        return Err(ServiceError::BadRequest("session_id in body does not match the URL".into()));
    }
    let response = blocking(move || m.feedback(&id, feedback)).await?;
    Ok(Json(response).into_response())
}

async fn simulate(body: Bytes) -> Result<Response, ServiceError> {
    let request: SimulateRequest = parse(&body)?;
    let response = blocking(move || run_simulation(request)).await?;
    Ok(Json(response).into_response())
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/trace", get(trace))
        .route("/simulate", post(simulate))
        .route("/healthz", get(healthz))
        .with_state(manager)
}

/// Serves the API on `listener` until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, manager: Arc<SessionManager>) -> std::io::Result<()> {
    axum::serve(listener, router(manager))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
