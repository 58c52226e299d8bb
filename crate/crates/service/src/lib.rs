//! HTTP front end: `POST /v1/assess`, `GET /v1/health`, `GET /v1/profiles`,
//! and static files for the web client.

pub mod overlay;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

use trueimage_core::classify::{ClassifyError, QualityReport, ThresholdProfile};
use trueimage_core::LoadedBundleF64;

pub use overlay::render_overlay;

pub const DEFAULT_MAX_BODY_BYTES: usize = 15 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_body_bytes: usize,
    /// Assessments allowed in flight; further requests get 429.
    pub max_concurrent: usize,
    /// Patch-sampling seed; the bundle's configured seed when `None`.
    pub seed: Option<u64>,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            max_concurrent: std::thread::available_parallelism().map_or(4, |n| n.get()),
            seed: None,
            static_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot read bundle {path}: {source}")]
    BundleIo { path: String, source: std::io::Error },
    #[error("bundle {path}: {source}")]
    Bundle { path: String, source: ClassifyError },
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

/// Shared, read-only state behind every handler.
pub struct AppState {
    bundle: Option<LoadedBundleF64>,
    started: Instant,
    limiter: Semaphore,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(bundle: Option<LoadedBundleF64>, config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            bundle,
            started: Instant::now(),
            limiter: Semaphore::new(config.max_concurrent.max(1)),
            config,
        })
    }

    pub fn load(bundle_path: Option<&Path>, config: ServiceConfig) -> Result<Arc<Self>, ServiceError> {
        let bundle = match bundle_path {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|source| ServiceError::BundleIo {
                    path: p.display().to_string(),
                    source,
                })?;
                Some(LoadedBundleF64::from_bytes(&bytes).map_err(|source| ServiceError::Bundle {
                    path: p.display().to_string(),
                    source,
                })?)
            }
            None => None,
        };
        Ok(Self::new(bundle, config))
    }

    pub fn model_version(&self) -> Option<&str> {
        self.bundle.as_ref().map(|b| b.model_version.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessResponse {
    #[serde(flatten)]
    pub report: QualityReport,
    /// Base64 PNG of the input with the skin mask and lesion outline drawn.
    pub overlay: String,
    pub request_id: String,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilesResponse {
    pub default_profile: String,
    pub profiles: Vec<ThresholdProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_version: Option<String>,
    pub uptime_s: f64,
}

/// JSON error body `{"error": {"code", "message", ...}}` with a status.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": { "code": code, "message": message.into() } }),
        }
    }

    fn not_loaded() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "BUNDLE_NOT_LOADED", "no model bundle is loaded")
    }

    fn from_classify(e: ClassifyError) -> Self {
        match &e {
            ClassifyError::UnknownProfile { available, .. } => {
                let mut err = Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string());
                err.body["error"]["available"] = json!(available);
                err
            }
            _ if e.is_input_error() => Self::new(StatusCode::BAD_REQUEST, e.code(), e.to_string()),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.code(), e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_body_bytes;
    let api = Router::new()
        .route("/v1/assess", post(assess))
        .route("/v1/health", get(health))
        .route("/v1/profiles", get(profiles))
        // Headroom for multipart framing; the image itself is checked against `limit`.
        .layer(DefaultBodyLimit::max(limit + 64 * 1024));
    let app = match &state.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, model_version = ?state.model_version(), "listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let uptime_s = state.started.elapsed().as_secs_f64();
    let (status, label) = match state.bundle {
        Some(_) => (StatusCode::OK, "ok"),
        None => (StatusCode::SERVICE_UNAVAILABLE, "no_bundle"),
    };
    let body = HealthResponse {
        status: label.into(),
        model_version: state.model_version().map(str::to_string),
        uptime_s,
    };
    (status, Json(body)).into_response()
}

async fn profiles(State(state): State<Arc<AppState>>) -> Result<Json<ProfilesResponse>, ApiError> {
    let loaded = state.bundle.as_ref().ok_or_else(ApiError::not_loaded)?;
    Ok(Json(ProfilesResponse {
        default_profile: loaded.bundle.default_profile.clone(),
        profiles: loaded.bundle.profiles.clone(),
    }))
}

#[derive(Debug, Deserialize)]
struct AssessQuery {
    profile: Option<String>,
}

async fn assess(
    State(state): State<Arc<AppState>>,
    Query(query): Query<AssessQuery>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Json<AssessResponse>, ApiError> {
    if state.bundle.is_none() {
        return Err(ApiError::not_loaded());
    }
    let mut multipart = multipart.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", e.body_text()))?;
    let mut image: Option<Vec<u8>> = None;
    let mut profile = query.profile;
    loop {
        let field = match multipart.next_field().await {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => return Err(multipart_error(e.status(), e.body_text(), state.config.max_body_bytes)),
        };
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| multipart_error(e.status(), e.body_text(), state.config.max_body_bytes))?;
        match name.as_str() {
            "image" => image = Some(bytes.to_vec()),
            "profile" => {
                let p = String::from_utf8_lossy(&bytes).trim().to_string();
                if !p.is_empty() {
                    profile = Some(p);
                }
            }
            _ => {}
        }
    }
    let image = image.filter(|b| !b.is_empty()).ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, "MALFORMED_IMAGE", "request has no image part or it is empty")
    })?;
    if image.len() > state.config.max_body_bytes {
        return Err(too_large(state.config.max_body_bytes));
    }

    let _permit = state.limiter.try_acquire().map_err(|_| {
        ApiError::new(StatusCode::TOO_MANY_REQUESTS, "TOO_MANY_REQUESTS", "assessment capacity exhausted; retry shortly")
    })?;
    let worker = Arc::clone(&state);
    let joined = tokio::task::spawn_blocking(move || assess_image(&worker, &image, profile.as_deref()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?;
    joined.map(Json)
}

fn too_large(limit: usize) -> ApiError {
    ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "PAYLOAD_TOO_LARGE", format!("payload exceeds {limit} bytes"))
}

fn multipart_error(status: StatusCode, text: String, limit: usize) -> ApiError {
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        too_large(limit)
    } else {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", text)
    }
}

/// The blocking part of `/v1/assess`; also used by tests to compare with
/// direct library calls.
pub fn assess_image(state: &AppState, bytes: &[u8], profile: Option<&str>) -> Result<AssessResponse, ApiError> {
    let loaded = state.bundle.as_ref().ok_or_else(ApiError::not_loaded)?;
    let bundle = &loaded.bundle;
    let profile = bundle.profile(profile).map_err(ApiError::from_classify)?;
    let seed = state.config.seed.unwrap_or(bundle.config.seed);
    let (img, assessment) = bundle.assess_bytes(bytes, profile, seed).map_err(ApiError::from_classify)?;
    let lesion = assessment.extraction.lesion.as_ref().map(|m| m.labels.as_slice());
    let overlay = render_overlay(&img, &assessment.extraction.skin.labels, lesion);
    Ok(AssessResponse {
        report: assessment.report,
        overlay: base64::engine::general_purpose::STANDARD.encode(overlay.encode_png()),
        request_id: uuid::Uuid::new_v4().to_string(),
        model_version: loaded.model_version.clone(),
    })
}
