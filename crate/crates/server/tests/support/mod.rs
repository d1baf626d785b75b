//! In-process server harness for the stream and HTTP tests.
#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use homeviz_core::packet::PacketRecord;
use homeviz_core::wire::decode_frame;
use homeviz_core::{IdentityResolver, StoreConfig, StreamFrame, TrafficQuery, TrafficStore};
use homeviz_server::{serve, AppState};
use tokio_tungstenite::tungstenite::Message;

use crate::common::test_lan;

pub fn open_store(dir: &Path) -> TrafficStore {
    TrafficStore::open(dir, IdentityResolver::bundled(test_lan()), StoreConfig::default()).unwrap()
}

/// Store `records` in one batch and return them as the store numbered them.
pub fn store_records(store: &TrafficStore, records: &[PacketRecord]) -> Vec<PacketRecord> {
    let first = store.snapshot().record_count() + 1;
    store.append_batch(records.to_vec()).unwrap();
    let mut numbered = records.to_vec();
    crate::common::number_from(&mut numbered, first);
    numbered
}

pub struct Server {
    pub addr: SocketAddr,
    pub state: AppState,
}

impl Server {
    pub async fn start(store: TrafficStore) -> Server {
        let state = AppState::new(Arc::new(store));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let serving = state.clone();
        tokio::spawn(async move { serve(listener, serving, std::future::pending()).await.unwrap() });
        Server { addr, state }
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}/stream", self.addr)
    }

    pub async fn session(&self, query: &TrafficQuery) -> Transcript {
        self.session_raw(&serde_json::to_string(query).unwrap()).await
    }

    pub async fn session_raw(&self, text: &str) -> Transcript {
        ws_session(self.addr, text).await
    }

    /// Wait until no session is registered, up to `limit`.
    pub async fn wait_idle(&self, limit: Duration) -> bool {
        let start = Instant::now();
        while start.elapsed() < limit {
            if self.state.registry.is_empty() {
                return true;
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        self.state.registry.is_empty()
    }
}

/// Send `text` as the query message to the server at `addr` and collect
/// frames until it closes the socket.
pub async fn ws_session(addr: SocketAddr, text: &str) -> Transcript {
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/stream"))
        .await
        .unwrap();
    let sent = Instant::now();
    ws.send(Message::text(text)).await.unwrap();
    let mut frames = Vec::new();
    while let Some(msg) = ws.next().await {
        match msg.unwrap() {
            Message::Text(t) => {
                assert!(t.as_str().ends_with('\n'), "frame is one NDJSON line");
                frames.push((sent.elapsed(), decode_frame(t.as_str()).unwrap()));
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    Transcript { frames }
}

/// Frames of one session with their arrival offsets from the query send.
pub struct Transcript {
    pub frames: Vec<(Duration, StreamFrame)>,
}

impl Transcript {
    pub fn kinds(&self) -> Vec<&'static str> {
        self.frames.iter().map(|(_, f)| f.kind()).collect()
    }

    pub fn events(&self) -> Vec<homeviz_core::PacketEvent> {
        self.frames
            .iter()
            .filter_map(|(_, f)| match f {
                StreamFrame::Packets { events } => Some(events.clone()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn sequences(&self) -> Vec<u64> {
        self.events().iter().map(|e| e.sequence).collect()
    }

    pub fn nodes(&self) -> Vec<homeviz_core::SceneNode> {
        self.frames
            .iter()
            .filter_map(|(_, f)| match f {
                StreamFrame::Devices { nodes } => Some(nodes.clone()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn connections(&self) -> Vec<homeviz_core::Connection> {
        self.frames
            .iter()
            .filter_map(|(_, f)| match f {
                StreamFrame::Connections { connections } => Some(connections.clone()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn last(&self) -> &StreamFrame {
        &self.frames.last().expect("at least one frame").1
    }

    pub fn duration(&self) -> Duration {
        self.frames.last().map(|f| f.0).unwrap_or_default()
    }

    /// Check the session grammar:
    /// `hello devices+ connections+ (packets|progress)* (end|error)`, with
    /// the `devices`/`connections` part absent when the session errors, at
    /// most 256 items per batch, and events nondecreasing in
    /// (timestamp, sequence).
    pub fn check_grammar(&self) -> Result<(), String> {
        let kinds = self.kinds();
        let mut i = 0;
        let expect = |i: usize, k: &str| kinds.get(i).copied() == Some(k);
        if !expect(0, "hello") {
            return Err(format!("first frame is not hello: {kinds:?}"));
        }
        i += 1;
        if expect(i, "error") {
            return if i + 1 == kinds.len() {
                Ok(())
            } else {
                Err("frames after error".into())
            };
        }
        let phase = |i: &mut usize, k: &str| {
            let start = *i;
            while expect(*i, k) {
                *i += 1;
            }
            *i > start
        };
        if !phase(&mut i, "devices") || !phase(&mut i, "connections") {
            return Err(format!("topology frames missing or out of order: {kinds:?}"));
        }
        while expect(i, "packets") || expect(i, "progress") {
            i += 1;
        }
        if !(expect(i, "end") || expect(i, "error")) || i + 1 != kinds.len() {
            return Err(format!(
                "session does not end with exactly one terminal frame: {kinds:?}"
            ));
        }
        for (_, f) in &self.frames {
            let n = match f {
                StreamFrame::Devices { nodes } => nodes.len(),
                StreamFrame::Connections { connections } => connections.len(),
                StreamFrame::Packets { events } => events.len(),
                _ => 0,
            };
            if n > homeviz_core::wire::MAX_BATCH {
                return Err(format!("{} frame with {n} items", f.kind()));
            }
        }
        let events = self.events();
        if events
            .windows(2)
            .any(|w| (w[0].timestamp, w[0].sequence) > (w[1].timestamp, w[1].sequence))
        {
            return Err("packet events out of (timestamp, sequence) order".into());
        }
        Ok(())
    }
}
