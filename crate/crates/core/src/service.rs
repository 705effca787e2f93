//! HTTP scoring service.
//!
//! `POST /score` takes `{"original": "...", "comments": [<hotflow element>, ...]}`
//! and answers with one entry per comment, either in `scored` or in `rejected`,
//! in request order. `GET /health` reports readiness and model versions.
//! Models are loaded once and never change while serving.

use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::parse_packet_element;
use crate::pipeline::{emotion_label, ModelVersions, Pipeline};

#[derive(Debug, Clone, Deserialize)]
pub struct ScoreRequest {
    /// Text of the tweet the comments reply to; empty counts as neutral.
    #[serde(default)]
    pub original: String,
    pub comments: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredEntry {
    pub index: usize,
    pub comment_id: String,
    pub sentiment: f64,
    pub emotion: String,
    pub troll_probability: f64,
    pub troll: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedEntry {
    pub index: usize,
    pub comment_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreResponse {
    pub model: ModelVersions,
    pub total: usize,
    pub scored: Vec<ScoredEntry>,
    pub rejected: Vec<RejectedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Health {
    pub ready: bool,
    pub models: Option<ModelVersions>,
}

/// Run the whole chain on one request. Every comment ends up in exactly one
/// of the two lists.
pub fn handle_score(pipeline: &Pipeline, request: &ScoreRequest) -> ScoreResponse {
    let mut rejected = Vec::new();
    let mut parsed = Vec::new();
    for (index, element) in request.comments.iter().enumerate() {
        match parse_packet_element(element, index) {
            Ok(c) => parsed.push((index, c)),
            Err(reason) => rejected.push(RejectedEntry {
                index,
                comment_id: element_id(element),
                reason: format!("invalid-comment: {reason}"),
            }),
        }
    }
    let records: Vec<_> = parsed.iter().map(|(_, c)| c.record.clone()).collect();
    let original = Some(request.original.as_str()).filter(|t| !t.trim().is_empty());
    let mut scored = Vec::new();
    for ((index, comment), outcome) in parsed.iter().zip(pipeline.score_batch(&records, original)) {
        match outcome {
            Ok(s) => scored.push(ScoredEntry {
                index: *index,
                comment_id: comment.comment_id.clone(),
                sentiment: s.scores.sentiment,
                emotion: emotion_label(s.scores.emotion).to_string(),
                troll_probability: s.prediction.probability,
                troll: s.prediction.troll,
            }),
            Err(reason) => rejected.push(RejectedEntry {
                index: *index,
                comment_id: Some(comment.comment_id.clone()),
                reason: reason.as_str().to_string(),
            }),
        }
    }
    rejected.sort_by_key(|r| r.index);
    ScoreResponse {
        model: pipeline.versions(),
        total: request.comments.len(),
        scored,
        rejected,
    }
}

fn element_id(element: &Value) -> Option<String> {
    ["id", "mid"].iter().find_map(|k| match element.get(k)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    })
}

/// Shared state: the pipeline slot is filled once, after which it is read-only.
#[derive(Default)]
pub struct ServiceState {
    pipeline: OnceLock<Arc<Pipeline>>,
}

impl ServiceState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ready(pipeline: Pipeline) -> Self {
        let state = Self::default();
        state.install(pipeline);
        state
    }

    /// Returns false if a pipeline was already installed.
    pub fn install(&self, pipeline: Pipeline) -> bool {
        self.pipeline.set(Arc::new(pipeline)).is_ok()
    }

    pub fn pipeline(&self) -> Option<&Arc<Pipeline>> {
        self.pipeline.get()
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/score", post(score).options(preflight))
        .layer(axum::middleware::map_response(cors))
        .with_state(state)
}

async fn cors(mut response: Response) -> Response {
    let h = response.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(
        header::ACCESS_CONTROL_ALLOW_METHODS,
        HeaderValue::from_static("GET, POST, OPTIONS"),
    );
    h.insert(
        header::ACCESS_CONTROL_ALLOW_HEADERS,
        HeaderValue::from_static("content-type"),
    );
    response
}

async fn preflight() -> StatusCode {
    StatusCode::NO_CONTENT
}

async fn health(State(state): State<Arc<ServiceState>>) -> Json<Health> {
    let models = state.pipeline().map(|p| p.versions());
    Json(Health {
        ready: models.is_some(),
        models,
    })
}

fn error(status: StatusCode, message: String) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

async fn score(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let Some(pipeline) = state.pipeline().cloned() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "models are not loaded".into());
    };
    let request: ScoreRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid request body: {e}")),
    };
    if request.comments.is_empty() {
        return error(StatusCode::BAD_REQUEST, "`comments` must not be empty".into());
    }
    match tokio::task::spawn_blocking(move || handle_score(&pipeline, &request)).await {
        Ok(response) => Json(response).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("scoring failed: {e}")),
    }
}

/// Serve until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: Arc<ServiceState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
