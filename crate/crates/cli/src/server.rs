//! HTTP and WebSocket front end for live sessions.
//!
//! Each session is one [`SessionHost`] in deferred mode behind a mutex.
//! Client frames and provider completions both go through that mutex, and
//! outgoing messages are queued while it is held, so the socket sees them
//! in log order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::mpsc;

use sketchvox_core::canvas::Gallery;
use sketchvox_core::config::ServiceConfig;
use sketchvox_core::providers::{Providers, Secret};
use sketchvox_core::session::{
    CompletionMode, HostOptions, ProviderCall, ServerMessage, SessionError, SessionHost,
    SessionSettings, SystemClock,
};

pub struct AppState {
    config: ServiceConfig,
    token: Option<Secret>,
    providers: Providers,
    gallery: Arc<Mutex<Gallery>>,
    sessions: Mutex<HashMap<String, Arc<LiveSession>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> anyhow::Result<Self> {
        let token = config.api_token()?;
        let providers = config.build_providers()?;
        let gallery = match &config.gallery_dir {
            Some(dir) => Gallery::open(dir)?,
            None => Gallery::in_memory(),
        };
        Ok(Self {
            config,
            token,
            providers,
            gallery: Arc::new(Mutex::new(gallery)),
            sessions: Mutex::new(HashMap::new()),
        })
    }

    /// Replaces the configured token (tests and embedding).
    pub fn with_token(mut self, token: Option<Secret>) -> Self {
        self.token = token;
        self
    }

    pub fn create_session(&self, settings: SessionSettings) -> Result<String, SessionError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let options = HostOptions {
            clock: Arc::new(SystemClock::default()),
            mode: CompletionMode::Deferred,
            log_dir: self.config.log_dir.as_ref().map(|d| d.join(&id)),
            gallery: Some(self.gallery.clone()),
        };
        let host = SessionHost::create(id.clone(), settings, self.providers.clone(), options)?;
        let session = Arc::new(LiveSession {
            host: Mutex::new(host),
            outbound: Mutex::new(None),
        });
        self.sessions.lock().unwrap().insert(id.clone(), session);
        tracing::info!(session = %id, "session created");
        Ok(id)
    }

    fn session(&self, id: &str) -> Result<Arc<LiveSession>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()).into())
    }
}

struct LiveSession {
    host: Mutex<SessionHost>,
    outbound: Mutex<Option<mpsc::UnboundedSender<ServerMessage>>>,
}

impl LiveSession {
    /// Runs `f` under the host lock, forwards its output and returns the
    /// provider calls it queued.
    fn run(&self, f: impl FnOnce(&mut SessionHost) -> Vec<ServerMessage>) -> Vec<ProviderCall> {
        let mut host = self.host.lock().unwrap();
        let out = f(&mut host);
        if let Some(tx) = self.outbound.lock().unwrap().as_ref() {
            for msg in out {
                let _ = tx.send(msg);
            }
        }
        host.take_pending_calls()
    }
}

/// Executes provider calls off the async workers. Each completion may
/// queue further calls (the next chat request), which are scheduled in
/// turn.
fn schedule(session: Arc<LiveSession>, providers: Providers, calls: Vec<ProviderCall>) {
    for call in calls {
        let session = session.clone();
        let providers = providers.clone();
        tokio::task::spawn_blocking(move || {
            let result = call.execute(&providers);
            let next = session.run(|h| h.complete(&call, result));
            schedule(session, providers, next);
        });
    }
}

pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::UnknownSession(_) => StatusCode::NOT_FOUND,
            SessionError::InvalidConfig(_) | SessionError::MalformedMessage(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "code": self.code, "message": self.message })),
        )
            .into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/ws", get(session_socket))
        .route("/sessions/{id}/snapshot", get(snapshot))
        .route("/sessions/{id}/artifacts/{artifact}", get(artifact))
        .route("/gallery", get(gallery_list))
        .route("/gallery/{entry}", get(gallery_entry))
        .route("/gallery/{entry}/thumbnail", get(gallery_thumbnail))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .route("/health", get(|| async { "ok" }))
        .with_state(state)
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Accepts `Authorization: Bearer <token>` or, for browser sockets that
/// cannot set headers, an `access_token` query parameter.
async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let Some(expected) = &state.token else {
        return next.run(req).await;
    };
    let from_header = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    let from_query = req.uri().query().and_then(|q| {
        q.split('&')
            .find_map(|kv| kv.strip_prefix("access_token="))
    });
    let presented = from_header.or(from_query).unwrap_or("");
    if constant_time_eq(presented.as_bytes(), expected.expose().as_bytes()) {
        next.run(req).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "UNAUTHORIZED", "missing or invalid API token")
            .into_response()
    }
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let settings = if body.iter().all(u8::is_ascii_whitespace) {
        state.config.session.clone()
    } else {
        serde_json::from_slice::<SessionSettings>(&body).map_err(|e| {
            ApiError::new(StatusCode::BAD_REQUEST, "INVALID_CONFIG", e.to_string())
        })?
    };
    let id = state.create_session(settings)?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

async fn snapshot(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let body = session.host.lock().unwrap().snapshot().to_canonical_json();
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn artifact(
    State(state): State<Arc<AppState>>,
    Path((id, artifact)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let host = session.host.lock().unwrap();
    match host.state().artifacts.get(&artifact) {
        Some(a) => Ok(png(a.image.png().to_vec())),
        None => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "UNKNOWN_ARTIFACT",
            format!("unknown artifact {artifact}"),
        )),
    }
}

async fn gallery_list(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    Json(state.gallery.lock().unwrap().list())
}

fn unknown_entry(entry: &str) -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "UNKNOWN_ENTRY",
        format!("unknown gallery entry {entry}"),
    )
}

async fn gallery_entry(
    State(state): State<Arc<AppState>>,
    Path(entry): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let gallery = state.gallery.lock().unwrap();
    let e = gallery.entry(&entry).ok_or_else(|| unknown_entry(&entry))?;
    Ok(Json(json!({
        "summary": e.summary(),
        "document": e.document_snapshot,
    })))
}

async fn gallery_thumbnail(
    State(state): State<Arc<AppState>>,
    Path(entry): Path<String>,
) -> Result<Response, ApiError> {
    let gallery = state.gallery.lock().unwrap();
    let e = gallery.entry(&entry).ok_or_else(|| unknown_entry(&entry))?;
    Ok(png(e.thumbnail.png().to_vec()))
}

async fn session_socket(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    Ok(ws.on_upgrade(move |socket| handle_socket(socket, state, session)))
}

async fn handle_socket(mut socket: WebSocket, state: Arc<AppState>, session: Arc<LiveSession>) {
    let (tx, mut rx) = mpsc::unbounded_channel();
    {
        // Hello goes out before anything else produced under the lock.
        let host = session.host.lock().unwrap();
        let _ = tx.send(host.hello());
        // A newer connection replaces an older one; the old writer ends
        // when its sender is dropped.
        *session.outbound.lock().unwrap() = Some(tx.clone());
    }
    let mine = tx.downgrade();
    drop(tx);
    loop {
        tokio::select! {
            out = rx.recv() => {
                let Some(msg) = out else { break };
                let text = serde_json::to_string(&msg).expect("server messages serialize");
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            incoming = socket.recv() => {
                let frame = match incoming {
                    Some(Ok(frame)) => frame,
                    _ => break,
                };
                let calls = match frame {
                    Message::Text(text) => {
                        let s = session.clone();
                        tokio::task::spawn_blocking(move || s.run(|h| h.dispatch_text(&text)))
                            .await
                    }
                    Message::Binary(data) => {
                        let s = session.clone();
                        tokio::task::spawn_blocking(move || s.run(|h| h.ingest_audio_frame(&data)))
                            .await
                    }
                    Message::Close(_) => break,
                    _ => continue,
                };
                match calls {
                    Ok(calls) => schedule(session.clone(), state.providers.clone(), calls),
                    Err(e) => {
                        tracing::error!("dispatch task failed: {e}");
                        break;
                    }
                }
            }
        }
    }
    let mut outbound = session.outbound.lock().unwrap();
    if let (Some(current), Some(mine)) = (outbound.as_ref(), mine.upgrade()) {
        if current.same_channel(&mine) {
            *outbound = None;
        }
    }
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
