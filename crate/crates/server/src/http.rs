//! HTTP and WebSocket routes.
//!
//! `GET /stream` upgrades to a WebSocket. The client sends one text message
//! holding a JSON [`TrafficQuery`]; the server answers with one frame per
//! text message, each a single NDJSON line, and closes after `end` or
//! `error`. A client that disconnects early cancels its session.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::serve::ListenerExt;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use homeviz_core::wire::encode_frame;
use homeviz_core::{ingest_capture, DeviceKey, IngestError, StoreError, Timestamp, TrafficStore};
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use crate::registry::SessionRegistry;
use crate::session::{parse_query, run_session, ChannelSink, SessionConfig};

/// How long a new socket may stay silent before its query arrives.
const QUERY_TIMEOUT: Duration = Duration::from_secs(30);

/// Largest accepted capture upload.
const MAX_UPLOAD: usize = 1 << 30;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<TrafficStore>,
    pub registry: Arc<SessionRegistry>,
    pub session: SessionConfig,
}

impl AppState {
    pub fn new(store: Arc<TrafficStore>) -> Self {
        AppState {
            store,
            registry: SessionRegistry::new(),
            session: SessionConfig::default(),
        }
    }
}

/// Serve `state` on `listener` until `shutdown` resolves.
///
/// Frames are small and timing matters, so Nagle's algorithm is disabled:
/// otherwise a frame can wait for the peer's delayed ACK, which skews
/// replay pacing by tens of milliseconds.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = listener.tap_io(|tcp| {
        if let Err(e) = tcp.set_nodelay(true) {
            tracing::warn!(error = %e, "could not disable Nagle's algorithm");
        }
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/stream", get(stream))
        .route("/ingest", post(ingest).layer(DefaultBodyLimit::max(MAX_UPLOAD)))
        .route("/devices", get(devices))
        .route("/analytics", get(analytics))
        .route("/sessions", get(sessions))
        .with_state(state)
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn reject(status: StatusCode, error: impl ToString) -> Response {
    (
        status,
        Json(ErrorBody {
            error: error.to_string(),
        }),
    )
        .into_response()
}

async fn ingest(State(state): State<AppState>, body: Bytes) -> Response {
    let store = state.store.clone();
    // Ingestion takes the store's writer lock; keep it off the async workers.
    let result = tokio::task::spawn_blocking(move || ingest_capture(&store, body.as_ref())).await;
    match result {
        Ok(Ok(report)) => Json(report).into_response(),
        Ok(Err(IngestError::Capture(e))) => reject(StatusCode::BAD_REQUEST, e),
        Ok(Err(IngestError::Store(e @ StoreError::StorageFull { .. }))) => reject(StatusCode::INSUFFICIENT_STORAGE, e),
        Ok(Err(e)) => reject(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => reject(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn devices(State(state): State<AppState>) -> Response {
    Json(state.store.list_devices()).into_response()
}

#[derive(Debug, Deserialize)]
struct AnalyticsParams {
    key: String,
    from: Option<String>,
    to: Option<String>,
}

async fn analytics(State(state): State<AppState>, Query(params): Query<AnalyticsParams>) -> Response {
    let key: DeviceKey = match params.key.parse() {
        Ok(k) => k,
        Err(e) => return reject(StatusCode::BAD_REQUEST, e),
    };
    let bound = |s: Option<String>| s.map(|s| s.parse::<Timestamp>()).transpose();
    let (from, to) = match (bound(params.from), bound(params.to)) {
        (Ok(from), Ok(to)) => (from, to),
        (Err(e), _) | (_, Err(e)) => return reject(StatusCode::BAD_REQUEST, e),
    };
    Json(state.store.summarize(&key, from, to)).into_response()
}

async fn sessions(State(state): State<AppState>) -> Response {
    Json(state.registry.list()).into_response()
}

async fn stream(State(state): State<AppState>, upgrade: WebSocketUpgrade) -> Response {
    upgrade.on_upgrade(move |socket| serve_socket(state, socket))
}

async fn serve_socket(state: AppState, socket: WebSocket) {
    let (mut outgoing, mut incoming) = socket.split();
    let text = match tokio::time::timeout(QUERY_TIMEOUT, first_text(&mut incoming)).await {
        Ok(Some(text)) => text,
        _ => return,
    };
    let query = parse_query(&text);
    // The snapshot is pinned before anything is sent, so the whole session
    // sees one consistent view even while ingestion continues.
    let snapshot = state.store.snapshot();
    let guard = query.as_ref().ok().map(|q| state.registry.register(q.clone()));
    let (tx, mut rx) = mpsc::channel(state.session.buffer.max(1));
    let config = state.session.clone();
    let producer = tokio::task::spawn_blocking(move || {
        let mut sink = ChannelSink(tx);
        let outcome = run_session(snapshot, query, &mut sink, &config, guard.as_ref());
        drop(guard);
        outcome
    });

    loop {
        tokio::select! {
            frame = rx.recv() => {
                let Some(frame) = frame else { break };
                let terminal = frame.is_terminal();
                if outgoing.send(Message::Text(encode_frame(&frame).into())).await.is_err() {
                    break;
                }
                if terminal {
                    let _ = outgoing.send(Message::Close(None)).await;
                    break;
                }
            }
            msg = incoming.next() => match msg {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                // One query per session; later messages are ignored.
                Some(Ok(_)) => {}
            },
        }
    }
    // Closing the receiver makes the producer observe cancellation.
    drop(rx);
    match producer.await {
        Ok(outcome) => tracing::debug!(?outcome, "session finished"),
        Err(e) => tracing::error!(error = %e, "session producer panicked"),
    }
}

async fn first_text(incoming: &mut futures_util::stream::SplitStream<WebSocket>) -> Option<String> {
    while let Some(msg) = incoming.next().await {
        match msg.ok()? {
            Message::Text(t) => return Some(t.to_string()),
            Message::Binary(b) => return String::from_utf8(b.to_vec()).ok(),
            Message::Close(_) => return None,
            _ => {}
        }
    }
    None
}
