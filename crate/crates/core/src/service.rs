//! HTTP session service.
//!
//! | method | path | |
//! |---|---|---|
//! | GET  | `/healthz` | liveness |
//! | GET  | `/sessions` | session list |
//! | POST | `/sessions` | ingest (`{source}` or `{scenario}`) |
//! | GET  | `/sessions/{id}` | manifest and cached artifact keys |
//! | POST | `/sessions/{id}/generic` | generate (or fetch) the generic summaries |
//! | POST | `/sessions/{id}/query` | `{text, modality}` → one artifact |
//! | GET  | `/sessions/{id}/artifacts/{key}` | cached artifact |
//! | GET  | `/sessions/{id}/traces/{key}` | selection trace |
//! | GET  | `/sessions/{id}/frames/{stream}/{index}` | frame image bytes |
//! | GET  | `/sessions/{id}/latency` | latency report |
//!
//! Errors are `{"error": ..}` objects: 404 for unknown sessions, artifacts
//! and frames; 409 for generic artifacts not generated yet; 422 for invalid
//! queries; 503 naming the provider role that could not be reached.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ingest::{
    ingest_scenario, ingest_video, list_sessions, ExtractorCommand, IngestError, IngestRequest, Session,
    SessionManifest, StreamKind,
};
use crate::model::{Modality, PipelineConfig};
use crate::pipeline::{
    Engine, PipelineError, ProviderOptions, GENERIC_KEYS,
};
use crate::providers::ProviderDescriptor;
use crate::synthetic::Scenario;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub sessions_root: PathBuf,
    pub extractor: Option<ExtractorCommand>,
    pub providers: ProviderOptions,
    /// Accept `POST /sessions`.
    pub allow_ingest: bool,
}

impl ServiceConfig {
    pub fn new(sessions_root: impl Into<PathBuf>) -> Self {
        Self { sessions_root: sessions_root.into(), extractor: None, providers: ProviderOptions::default(), allow_ingest: true }
    }
}

pub struct AppState {
    cfg: ServiceConfig,
    engines: Mutex<HashMap<String, Arc<Engine>>>,
    ingest: tokio::sync::Mutex<()>,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Arc<Self> {
        Arc::new(Self { cfg, engines: Mutex::new(HashMap::new()), ingest: tokio::sync::Mutex::new(()) })
    }

    fn engine(&self, id: &str) -> Result<Arc<Engine>, ApiError> {
        if let Some(e) = self.engines.lock().unwrap_or_else(|e| e.into_inner()).get(id) {
            return Ok(e.clone());
        }
        let session = Arc::new(Session::open_id(&self.cfg.sessions_root, id)?);
        let engine = Arc::new(Engine::for_session(session, &self.cfg.providers)?);
        let mut map = self.engines.lock().unwrap_or_else(|e| e.into_inner());
        Ok(map.entry(id.to_string()).or_insert(engine).clone())
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, body: json!({ "error": message.into() }) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let status = match &e {
            IngestError::UnknownSession(_) => StatusCode::NOT_FOUND,
            IngestError::Config(_) | IngestError::BadTemplate(_) | IngestError::NoExtractor(_) | IngestError::Immutable(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            IngestError::Extractor { .. } | IngestError::NoFrames(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        if let Some(role) = e.unavailable_role() {
            return ApiError {
                status: StatusCode::SERVICE_UNAVAILABLE,
                body: json!({ "error": e.to_string(), "role": role }),
            };
        }
        match e {
            PipelineError::Ingest(inner) => inner.into(),
            PipelineError::InvalidQuery(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            PipelineError::SpaceMismatch { .. } => ApiError::new(StatusCode::CONFLICT, e.to_string()),
            PipelineError::Provider(ref p) | PipelineError::MissingArchive { source: ref p, .. } => ApiError {
                status: StatusCode::BAD_GATEWAY,
                body: json!({ "error": e.to_string(), "role": p.role() }),
            },
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))?
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub source_uri: String,
    pub duration_s: f64,
    pub archives: Vec<String>,
    pub generic_ready: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionDetail {
    #[serde(flatten)]
    pub manifest: SessionManifest,
    pub artifacts: Vec<String>,
}

/// Body of `POST /sessions`. Exactly one of `source` and `scenario`.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct IngestBody {
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub config: Option<PipelineConfig>,
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub providers: Vec<ProviderDescriptor>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueryBody {
    pub text: String,
    #[serde(default = "default_modality")]
    pub modality: String,
}

fn default_modality() -> String {
    "storyboard".into()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/sessions", get(list).post(create))
        .route("/sessions/{id}", get(detail))
        .route("/sessions/{id}/generic", post(generic))
        .route("/sessions/{id}/query", post(query))
        .route("/sessions/{id}/artifacts/{key}", get(artifact))
        .route("/sessions/{id}/traces/{key}", get(trace))
        .route("/sessions/{id}/frames/{stream}/{index}", get(frame))
        .route("/sessions/{id}/latency", get(latency))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(addr: std::net::SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn list(State(st): State<Arc<AppState>>) -> Result<Json<Vec<SessionSummary>>, ApiError> {
    blocking(move || {
        let mut out = Vec::new();
        for id in list_sessions(&st.cfg.sessions_root) {
            let Ok(s) = Session::open_id(&st.cfg.sessions_root, &id) else { continue };
            let m = s.manifest();
            let keys = s.artifact_keys();
            out.push(SessionSummary {
                id,
                source_uri: m.meta.source_uri.clone(),
                duration_s: m.meta.duration_s,
                archives: m.archives.keys().map(|r| r.to_string()).collect(),
                generic_ready: GENERIC_KEYS.iter().all(|k| keys.iter().any(|x| x == k)),
            });
        }
        Ok(Json(out))
    })
    .await
}

async fn create(State(st): State<Arc<AppState>>, Json(body): Json<IngestBody>) -> Result<Response, ApiError> {
    if !st.cfg.allow_ingest {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "ingestion is disabled on this service"));
    }
    let _exclusive = st.ingest.lock().await;
    let st2 = st.clone();
    let manifest = blocking(move || {
        let config = body.config.unwrap_or_default();
        let session = match (body.source, body.scenario) {
            (Some(source), None) => ingest_video(
                &st2.cfg.sessions_root,
                IngestRequest {
                    source,
                    config,
                    id: body.id,
                    extractor: st2.cfg.extractor.clone(),
                    duration_s: body.duration_s,
                    providers: body.providers,
                },
            )?,
            (None, Some(sc)) => {
                let s = ingest_scenario(&st2.cfg.sessions_root, &sc, config, body.id)?;
                if !body.providers.is_empty() {
                    s.set_providers(body.providers)?;
                }
                s
            }
            _ => {
                return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "give exactly one of source and scenario"))
            }
        };
        let m = session.manifest();
        st2.engines.lock().unwrap_or_else(|e| e.into_inner()).remove(&m.id);
        Ok(m)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(manifest)).into_response())
}

async fn detail(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionDetail>, ApiError> {
    blocking(move || {
        let e = st.engine(&id)?;
        Ok(Json(SessionDetail { manifest: e.session().manifest(), artifacts: e.session().artifact_keys() }))
    })
    .await
}

async fn generic(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    blocking(move || {
        let e = st.engine(&id)?;
        Ok(Json(e.run_generic()?).into_response())
    })
    .await
}

async fn query(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<QueryBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    let modality: Modality =
        body.modality.parse().map_err(|e: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    blocking(move || {
        let e = st.engine(&id)?;
        let out = e.run_query(&body.text, modality)?;
        let mut resp = Json(out.response).into_response();
        resp.headers_mut()
            .insert("x-cache", HeaderValue::from_static(if out.cached { "hit" } else { "miss" }));
        Ok(resp)
    })
    .await
}

fn is_generic_key(key: &str) -> bool {
    GENERIC_KEYS.contains(&key)
}

async fn artifact(State(st): State<Arc<AppState>>, Path((id, key)): Path<(String, String)>) -> Result<Response, ApiError> {
    blocking(move || {
        let e = st.engine(&id)?;
        if !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no artifact {key:?}")));
        }
        match e.artifact(&key)? {
            Some(r) => Ok(Json(r).into_response()),
            None if is_generic_key(&key) => Err(ApiError {
                status: StatusCode::CONFLICT,
                body: json!({
                    "error": format!("{key} has not been generated yet"),
                    "hint": format!("POST /sessions/{id}/generic to generate the generic summaries"),
                }),
            }),
            None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("no artifact {key:?}"))),
        }
    })
    .await
}

async fn trace(State(st): State<Arc<AppState>>, Path((id, key)): Path<(String, String)>) -> Result<Response, ApiError> {
    blocking(move || {
        let e = st.engine(&id)?;
        if !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
            return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no trace {key:?}")));
        }
        match e.session().load_trace(&key)? {
            Some(t) => Ok(Json(t).into_response()),
            None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("no trace {key:?}"))),
        }
    })
    .await
}

async fn frame(
    State(st): State<Arc<AppState>>,
    Path((id, stream, index)): Path<(String, String, u64)>,
) -> Result<Response, ApiError> {
    blocking(move || {
        let e = st.engine(&id)?;
        let kind: StreamKind = stream.parse().map_err(|m: String| ApiError::new(StatusCode::NOT_FOUND, m))?;
        let s = e.session();
        let info = s.manifest().stream(kind).clone();
        if index >= info.frame_count {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                format!("{stream} stream has {} frames", info.frame_count),
            ));
        }
        let (bytes, mime) = match s.frame_path(kind, index) {
            Some(p) => {
                let bytes = std::fs::read(&p).map_err(|err| ApiError::new(StatusCode::NOT_FOUND, err.to_string()))?;
                let mime = match p.extension().and_then(|x| x.to_str()).map(str::to_ascii_lowercase).as_deref() {
                    Some("jpg" | "jpeg") => "image/jpeg",
                    Some("bmp") => "image/bmp",
                    Some("ppm") => "image/x-portable-pixmap",
                    _ => "image/png",
                };
                (bytes, mime)
            }
            None => match s.world() {
                Some(w) => (w.render_png(index, info.rate), "image/png"),
                None => return Err(ApiError::new(StatusCode::NOT_FOUND, "stream has no images")),
            },
        };
        Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
    })
    .await
}

async fn latency(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    blocking(move || {
        let e = st.engine(&id)?;
        Ok(Json(e.latency_report()?).into_response())
    })
    .await
}
