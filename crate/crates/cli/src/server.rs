//! Read-only HTTP service over one model and its index.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use log::{info, warn};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use sbsr::dataset::{decode_image, load_image, load_manifest};
use sbsr::retrieval::{pca_2d, FeatureIndex};
use sbsr::train::SiameseModel;
use sbsr::Domain;

use crate::error::{CliError, CliResult, Exit};
use crate::query::{query_models, QueryResponse, MAX_K};

pub const DEFAULT_K: usize = 15;

pub struct AppState {
    pub model: SiameseModel,
    pub index: FeatureIndex,
    /// View image files of each model, in view order.
    pub views: HashMap<String, [PathBuf; 2]>,
    /// Serialized `/api/embedding` payload.
    pub embedding: Vec<u8>,
}

impl AppState {
    pub fn new(
        model: SiameseModel,
        index: FeatureIndex,
        views: HashMap<String, [PathBuf; 2]>,
    ) -> CliResult<Self> {
        index
            .check_model(&model)
            .map_err(|e| CliError::new(Exit::InputMissing, e.to_string()))?;
        let points = pca_2d(&index)?;
        let embedding = serde_json::to_vec(&points).expect("points serialize");
        Ok(AppState {
            model,
            index,
            views,
            embedding,
        })
    }

    /// Loads the artifacts. Without a manifest the view endpoint answers 404.
    pub fn load(checkpoint: &Path, index: &Path, manifest: Option<&Path>) -> CliResult<Self> {
        let (model, _) = SiameseModel::load(checkpoint)?;
        let index = FeatureIndex::read(index)?;
        let views = match manifest {
            Some(p) if p.is_file() => view_files(p)?,
            Some(p) => {
                warn!("{} not found; view images unavailable", p.display());
                HashMap::new()
            }
            None => HashMap::new(),
        };
        AppState::new(model, index, views)
    }
}

/// Maps each model to its two view images, ordered by entry id.
pub fn view_files(manifest: &Path) -> CliResult<HashMap<String, [PathBuf; 2]>> {
    let manifest = load_manifest(manifest)?;
    let mut by_model: BTreeMap<&str, Vec<(&str, PathBuf)>> = BTreeMap::new();
    for e in manifest
        .entries()
        .iter()
        .filter(|e| e.domain == Domain::View)
    {
        if let Some(m) = e.model_id.as_deref() {
            by_model
                .entry(m)
                .or_default()
                .push((e.id.as_str(), manifest.resolve(e)));
        }
    }
    Ok(by_model
        .into_iter()
        .filter_map(|(m, mut v)| {
            v.sort_by(|a, b| a.0.cmp(b.0));
            let [a, b]: [(&str, PathBuf); 2] = v.try_into().ok()?;
            Some((m.to_owned(), [a.1, b.1]))
        })
        .collect())
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods(Any)
        .allow_headers(Any);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/query", post(query))
        .route("/api/models/{id}/views/{k}", get(view_image))
        .route("/api/embedding", get(embedding))
        .layer(cors)
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Debug, Deserialize)]
struct QueryRequest {
    image_png_base64: String,
    #[serde(default)]
    k: Option<usize>,
}

async fn query(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let start = Instant::now();
    if body.is_empty() {
        return error(StatusCode::BAD_REQUEST, "empty request body");
    }
    let req: QueryRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid request: {e}")),
    };
    let k = req.k.unwrap_or(DEFAULT_K);
    if k == 0 || k > MAX_K {
        return error(StatusCode::BAD_REQUEST, format!("k must be in 1..={MAX_K}"));
    }
    let b64 = req
        .image_png_base64
        .split_once("base64,")
        .map_or(req.image_png_base64.as_str(), |(_, data)| data);
    let bytes = match base64::engine::general_purpose::STANDARD.decode(b64.trim()) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid base64: {e}")),
    };
    let image = match decode_image(&bytes) {
        Ok(img) => img,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let worker = Arc::clone(&state);
    let results =
        tokio::task::spawn_blocking(move || query_models(&worker.model, &worker.index, &image, k))
            .await;
    match results {
        Ok(Ok(results)) => Json(QueryResponse {
            results,
            elapsed_ms: Some(start.elapsed().as_secs_f64() * 1e3),
        })
        .into_response(),
        Ok(Err(e)) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn view_image(
    State(state): State<Arc<AppState>>,
    UrlPath((id, k)): UrlPath<(String, String)>,
) -> Response {
    let slot = match k.as_str() {
        "1" => 0,
        "2" => 1,
        _ => return error(StatusCode::NOT_FOUND, "views are numbered 1 and 2"),
    };
    let Some(files) = state.views.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown model {id:?}"));
    };
    match load_image(&files[slot]).and_then(|img| img.encode_png()) {
        Ok(png) => ([(header::CONTENT_TYPE, "image/png")], png).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn embedding(State(state): State<Arc<AppState>>) -> Response {
    (
        [(header::CONTENT_TYPE, "application/json")],
        state.embedding.clone(),
    )
        .into_response()
}

/// Binds `host:port` and serves until the process is stopped.
pub async fn serve(state: AppState, host: &str, port: u16) -> CliResult {
    let listener = tokio::net::TcpListener::bind((host, port))
        .await
        .map_err(|e| CliError::new(Exit::Bind, format!("cannot bind {host}:{port}: {e}")))?;
    info!(
        "serving {} indexed entries on http://{}",
        state.index.len(),
        listener
            .local_addr()
            .map(|a| a.to_string())
            .unwrap_or_default()
    );
    axum::serve(listener, router(Arc::new(state)))
        .await
        .map_err(|e| CliError::new(Exit::Failure, e.to_string()))
}

pub fn serve_blocking(state: AppState, host: &str, port: u16) -> CliResult {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new(Exit::Failure, e.to_string()))?
        .block_on(serve(state, host, port))
}
