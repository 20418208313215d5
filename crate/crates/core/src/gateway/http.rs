use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::sync::oneshot;

use super::service::{AppState, ChatRequest, IngestRequest, RebuildRequest, SelectRequest};
use super::{ApiError, GatewayError, ServiceConfig};
use crate::ingest::{ConvertOptions, InputFormat};

type Shared = Arc<AppState>;

const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/chat", post(chat))
        .route("/models", get(models))
        .route("/select-model", post(select_model))
        .route("/ingest", post(ingest))
        .route("/index/rebuild", post(rebuild))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .route("/health", get(health))
        .fallback(not_found);
    Router::new()
        .route("/health", get(health))
        .nest("/api/v1", api)
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

/// Rejects before the handler (and therefore before any state) is touched.
async fn require_token(State(state): State<Shared>, req: Request, next: Next) -> Response {
    if !state.config().auth_enabled {
        return next.run(req).await;
    }
    let authorized = req
        .headers()
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| state.token_ok(t.trim()));
    if authorized {
        next.run(req).await
    } else {
        ApiError::unauthorized().into_response()
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn json_body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

async fn health(State(state): State<Shared>) -> impl IntoResponse {
    Json(state.health())
}

async fn create_session(State(state): State<Shared>) -> Result<impl IntoResponse, ApiError> {
    let session = blocking(move || state.create_session()).await?;
    Ok((
        axum::http::StatusCode::CREATED,
        Json(serde_json::json!({ "session_id": session.session_id })),
    ))
}

async fn list_sessions(State(state): State<Shared>) -> impl IntoResponse {
    Json(serde_json::json!({ "sessions": state.sessions().list() }))
}

async fn get_session(State(state): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(state.get_session(&id)?))
}

async fn chat(
    State(state): State<Shared>,
    Path(id): Path<String>,
    payload: Result<Json<ChatRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    if state.sessions().get(&id).is_none() {
        return Err(ApiError::not_found(format!("no session `{id}`")));
    }
    let request = json_body(payload)?;
    Ok(Json(blocking(move || state.chat(&id, &request)).await?))
}

async fn models(State(state): State<Shared>) -> impl IntoResponse {
    Json(serde_json::json!({ "models": state.catalog() }))
}

async fn select_model(
    State(state): State<Shared>,
    payload: Result<Json<SelectRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let request = json_body(payload)?;
    Ok(Json(state.select(&request)?))
}

#[derive(Debug, Default, Deserialize)]
struct IngestQuery {
    source_tag: Option<String>,
    disease_column: Option<String>,
    has_header: Option<bool>,
    format: Option<String>,
}

fn parse_format(name: &str) -> Result<InputFormat, ApiError> {
    match name.to_ascii_lowercase().as_str() {
        "csv" => Ok(InputFormat::Csv),
        "jsonl" | "ndjson" => Ok(InputFormat::Jsonl),
        other => Err(ApiError::bad_request(format!("unknown format `{other}` (expected csv or jsonl)"))),
    }
}

fn format_from_content_type(ct: &str) -> InputFormat {
    if ct.contains("ndjson") || ct.contains("jsonl") || ct.starts_with("application/json") {
        InputFormat::Jsonl
    } else {
        InputFormat::Csv
    }
}

/// Accepts `multipart/form-data` (a `file` part plus optional `source_tag`,
/// `disease_column`, `has_header`, `format` parts) or a raw CSV / JSONL body
/// with the same settings as query parameters.
async fn ingest(
    State(state): State<Shared>,
    Query(query): Query<IngestQuery>,
    req: Request,
) -> Result<impl IntoResponse, ApiError> {
    let content_type = req
        .headers()
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase();

    let mut source_tag = query.source_tag;
    let mut disease_column = query.disease_column;
    let mut has_header = query.has_header.unwrap_or(true);
    let mut format = query.format.as_deref().map(parse_format).transpose()?;
    let bytes: Vec<u8>;

    if content_type.starts_with("multipart/form-data") {
        let mut form = Multipart::from_request(req, &state)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let mut file = None;
        while let Some(field) = form
            .next_field()
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?
        {
            let name = field.name().unwrap_or("").to_string();
            if name == "file" {
                let file_name = field.file_name().map(str::to_string);
                let part_type = field.content_type().map(str::to_ascii_lowercase);
                let data = field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
                if format.is_none() {
                    format = Some(match (&file_name, &part_type) {
                        (Some(f), _) if !f.is_empty() => InputFormat::from_path(std::path::Path::new(f)),
                        (_, Some(t)) => format_from_content_type(t),
                        _ => InputFormat::Csv,
                    });
                }
                if source_tag.is_none() {
                    source_tag = file_name
                        .as_deref()
                        .and_then(|f| std::path::Path::new(f).file_stem())
                        .map(|s| s.to_string_lossy().into_owned());
                }
                file = Some(data.to_vec());
                continue;
            }
            let text = field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
            match name.as_str() {
                "source_tag" => source_tag = Some(text),
                "disease_column" => disease_column = Some(text),
                "has_header" => {
                    has_header = text
                        .trim()
                        .parse()
                        .map_err(|_| ApiError::bad_request("has_header must be true or false"))?
                }
                "format" => format = Some(parse_format(&text)?),
                other => return Err(ApiError::bad_request(format!("unexpected form field `{other}`"))),
            }
        }
        bytes = file.ok_or_else(|| ApiError::bad_request("multipart body has no `file` part"))?;
    } else {
        if format.is_none() {
            format = Some(format_from_content_type(&content_type));
        }
        bytes = Bytes::from_request(req, &state)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?
            .to_vec();
    }

    let source_tag = source_tag.unwrap_or_else(|| "upload".to_string());
    if source_tag.trim().is_empty() {
        return Err(ApiError::bad_request("source_tag must not be empty"));
    }
    let request = IngestRequest {
        bytes,
        format: format.unwrap_or(InputFormat::Csv),
        options: ConvertOptions {
            source_tag,
            disease_column,
            has_header,
        },
    };
    Ok(Json(blocking(move || state.ingest(&request)).await?))
}

async fn rebuild(State(state): State<Shared>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let request: RebuildRequest = if body.iter().all(u8::is_ascii_whitespace) {
        RebuildRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))?
    };
    Ok(Json(blocking(move || state.rebuild(&request)).await?))
}

/// A bound, running service.
pub struct ServiceHandle {
    pub addr: SocketAddr,
    pub state: Shared,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl ServiceHandle {
    /// Stop accepting connections and wait for in-flight requests.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.await.map_err(std::io::Error::other)?
    }
}

/// Open state, bind `config.listen` and start serving on the current runtime.
pub async fn start(config: ServiceConfig) -> Result<ServiceHandle, GatewayError> {
    let listen = config.listen;
    let (state, report) = AppState::open(config)?;
    if !report.quarantined.is_empty() {
        tracing::warn!(files = ?report.quarantined, "some session logs were quarantined");
    }
    tracing::info!(sessions = report.loaded, "session store ready");
    let state = Arc::new(state);
    let listener = tokio::net::TcpListener::bind(listen)
        .await
        .map_err(|source| GatewayError::Bind { addr: listen, source })?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(state.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!(%addr, "listening");
    Ok(ServiceHandle {
        addr,
        state,
        shutdown: Some(tx),
        task,
    })
}

/// Serve until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), GatewayError> {
    let handle = start(config).await?;
    let _ = tokio::signal::ctrl_c().await;
    tracing::info!("shutting down");
    handle.shutdown().await?;
    Ok(())
}

/// The service on its own runtime, for synchronous callers. Dropping it
/// shuts the service down.
pub struct BackgroundService {
    handle: Option<ServiceHandle>,
    runtime: Option<tokio::runtime::Runtime>,
}

pub fn spawn(config: ServiceConfig) -> Result<BackgroundService, GatewayError> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let handle = runtime.block_on(start(config))?;
    Ok(BackgroundService {
        handle: Some(handle),
        runtime: Some(runtime),
    })
}

impl BackgroundService {
    pub fn addr(&self) -> SocketAddr {
        self.handle.as_ref().expect("running").addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr())
    }

    pub fn state(&self) -> &AppState {
        &self.handle.as_ref().expect("running").state
    }
}

impl Drop for BackgroundService {
    fn drop(&mut self) {
        if let (Some(handle), Some(runtime)) = (self.handle.take(), self.runtime.take()) {
            let _ = runtime.block_on(async {
                tokio::time::timeout(Duration::from_secs(5), handle.shutdown()).await
            });
            runtime.shutdown_timeout(Duration::from_secs(1));
        }
    }
}
