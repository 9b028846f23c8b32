//! Minimal HTTP scoring endpoint over one immutable model.

use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use reviewlens::ClassifierModel;

use crate::{read_model_file, ServeArgs};

pub const DEFAULT_MAX_BODY_BYTES: usize = 65_536;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: SocketAddr,
    pub model_file: std::path::PathBuf,
    pub max_body_bytes: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictRequest {
    text: String,
}

#[derive(Debug, Serialize)]
struct PredictResponse {
    label: u8,
    score: f64,
}

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

async fn predict(State(model): State<Arc<ClassifierModel>>, body: Bytes) -> Response {
    let req: PredictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    match model.predict_text(&req.text) {
        Ok(p) => Json(PredictResponse { label: p.label, score: p.score }).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn health(State(model): State<Arc<ClassifierModel>>) -> Response {
    Json(json!({ "status": "ok", "model_kind": model.kind() })).into_response()
}

/// Routes for `model`. Models over precomputed vectors cannot score text and
/// are refused.
pub fn router(model: ClassifierModel, max_body_bytes: usize) -> Result<Router> {
    if !model.kind().reads_text() {
        bail!("{} scores precomputed vectors and cannot be served", model.kind());
    }
    Ok(Router::new()
        .route("/predict", post(predict))
        .route("/health", get(health))
        .fallback(|| async { error(StatusCode::NOT_FOUND, "not found") })
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(Arc::new(model)))
}

/// Serves on an already bound listener until the task is dropped.
pub async fn serve_on(listener: tokio::net::TcpListener, app: Router) -> Result<()> {
    axum::serve(listener, app).await.context("serving")
}

pub fn serve(cfg: &ServeConfig) -> Result<()> {
    let model = read_model_file(&cfg.model_file)?;
    let app = router(model, cfg.max_body_bytes)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener =
            tokio::net::TcpListener::bind(cfg.bind).await.with_context(|| format!("binding {}", cfg.bind))?;
        eprintln!("listening on {}", listener.local_addr()?);
        serve_on(listener, app).await
    })
}

pub(crate) fn run(a: &ServeArgs) -> Result<()> {
    let bind = a.bind.parse().with_context(|| format!("bad bind address {:?}", a.bind))?;
    serve(&ServeConfig { bind, model_file: a.model_file.clone(), max_body_bytes: DEFAULT_MAX_BODY_BYTES })
}
