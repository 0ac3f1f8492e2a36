//! HTTP and WebSocket front end for a single session.
//!
//! | Route | Reply |
//! |---|---|
//! | `GET /health` | `{"status":"ok","protocol":1,"revision":n}` |
//! | `GET /snapshot` | full snapshot JSON |
//! | `POST /command` | command JSON in, event JSON out (400 with `{"error":..}` on rejection) |
//! | `GET /mesh/{id}` | one `RMSH` blob |
//! | `GET /meshes` | `RMSB` bundle of the visible paths |
//! | `GET /assets`, `GET /assets/{name}` | asset list, raw asset bytes |
//! | `GET /ws?protocol=1` | WebSocket stream |

mod actor;
mod ws;

use std::net::SocketAddr;

use axum::body::Bytes;
use axum::extract::{Path, Query, State, WebSocketUpgrade};
use axum::http::{StatusCode, header};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use trajscope_core::Command;
use trajscope_core::session::PROTOCOL_VERSION;
pub use trajscope_core::Session;

use actor::SessionHandle;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn bytes_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/octet-stream")], Bytes::from(bytes)).into_response()
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn health(State(s): State<SessionHandle>) -> Response {
    let rev = s.snapshot().await.revision;
    Json(json!({ "status": "ok", "protocol": PROTOCOL_VERSION, "revision": rev })).into_response()
}

async fn snapshot(State(s): State<SessionHandle>) -> Response {
    Json(s.snapshot().await).into_response()
}

async fn command(State(s): State<SessionHandle>, body: Bytes) -> Response {
    let cmd: Command = match serde_json::from_slice(&body) {
        Ok(c) => c,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed command: {e}")),
    };
    match s.apply(cmd).await {
        Ok(ev) => Json(ev).into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, e),
    }
}

async fn mesh(State(s): State<SessionHandle>, Path(id): Path<u32>) -> Response {
    match s.mesh(id).await {
        Ok(b) => bytes_response(b),
        Err(e) => error(StatusCode::NOT_FOUND, e),
    }
}

async fn meshes(State(s): State<SessionHandle>) -> Response {
    match s.meshes().await {
        Ok(b) => bytes_response(b),
        Err(e) => error(StatusCode::NOT_FOUND, e),
    }
}

async fn assets(State(s): State<SessionHandle>) -> Response {
    let list: Vec<_> = s.assets().await.into_iter().map(|(name, bytes)| json!({ "name": name, "bytes": bytes })).collect();
    Json(list).into_response()
}

async fn asset(State(s): State<SessionHandle>, Path(name): Path<String>) -> Response {
    match s.asset(name.clone()).await {
        Some(b) => bytes_response(b.as_ref().clone()),
        None => error(StatusCode::NOT_FOUND, format!("no asset named `{name}`")),
    }
}

#[derive(Deserialize)]
struct WsParams {
    protocol: Option<u32>,
}

async fn websocket(State(s): State<SessionHandle>, Query(p): Query<WsParams>, upgrade: WebSocketUpgrade) -> Response {
    match p.protocol {
        Some(PROTOCOL_VERSION) => upgrade.on_upgrade(move |socket| ws::connection(socket, s)),
        Some(v) => error(StatusCode::BAD_REQUEST, format!("protocol version {v} not supported; server speaks {PROTOCOL_VERSION}")),
        None => error(StatusCode::BAD_REQUEST, format!("missing `protocol` query parameter; server speaks {PROTOCOL_VERSION}")),
    }
}

fn router(handle: SessionHandle) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/snapshot", get(snapshot))
        .route("/command", post(command))
        .route("/mesh/{id}", get(mesh))
        .route("/meshes", get(meshes))
        .route("/assets", get(assets))
        .route("/assets/{name}", get(asset))
        .route("/ws", get(websocket))
        .with_state(handle)
}

/// A server running on a background task.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.await.map_err(std::io::Error::other)?
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `session` until shut down.
pub async fn spawn(session: Session, addr: SocketAddr) -> Result<RunningServer, ServeError> {
    let listener = TcpListener::bind(addr).await.map_err(|source| ServeError::Bind { addr, source })?;
    let addr = listener.local_addr()?;
    let app = router(SessionHandle::start(session));
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!(%addr, "serving");
    Ok(RunningServer { addr, shutdown: Some(tx), task })
}

/// Serves until ctrl-c.
pub async fn serve(session: Session, addr: SocketAddr) -> Result<(), ServeError> {
    let server = spawn(session, addr).await?;
    println!("listening on {}", server.url());
    tokio::signal::ctrl_c().await?;
    server.shutdown().await?;
    Ok(())
}
