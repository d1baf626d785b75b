//! One query session: turn a [`TrafficQuery`] into the frame sequence
//! `hello, devices*, connections*, (packets | progress)*, end | error`.
//!
//! The producer is synchronous and runs on a blocking thread. Scene
//! topology needs the whole result, so the snapshot is scanned twice: once
//! to build nodes and connections, once to emit paced packet events. Both
//! passes read the same immutable snapshot, so they see the same records in
//! the same order and assign the same connection ids.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use homeviz_core::pace::ReplayClock;
use homeviz_core::store::Snapshot;
use homeviz_core::wire::{encode_frame, ErrorCode, MAX_BATCH, PROTOCOL_VERSION};
use homeviz_core::{SceneBuilder, StreamFrame, TrafficQuery};
use tokio::sync::mpsc::{self, error::TrySendError};

use crate::registry::SessionGuard;

/// Longest single sleep while waiting for a deadline, so a disconnect is
/// noticed promptly even during long gaps.
const POLL_SLICE: Duration = Duration::from_millis(20);

#[derive(Debug, Clone)]
pub struct SessionConfig {
    /// Max events, nodes, or connections per frame.
    pub batch: usize,
    /// Wall-clock interval between progress frames.
    pub progress_every: Duration,
    /// Frames buffered per session before the replay clock pauses.
    pub buffer: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            batch: MAX_BATCH,
            progress_every: Duration::from_millis(250),
            buffer: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cancelled;

/// Destination of a session's frames.
pub trait FrameSink {
    /// Deliver one frame, returning how long the call blocked on a full
    /// buffer.
    fn send(&mut self, frame: StreamFrame) -> Result<Duration, Cancelled>;

    fn is_closed(&self) -> bool {
        false
    }
}

/// Bounded channel to a connection writer task.
pub struct ChannelSink(pub mpsc::Sender<StreamFrame>);

impl FrameSink for ChannelSink {
    fn send(&mut self, frame: StreamFrame) -> Result<Duration, Cancelled> {
        match self.0.try_send(frame) {
            Ok(()) => Ok(Duration::ZERO),
            Err(TrySendError::Closed(_)) => Err(Cancelled),
            Err(TrySendError::Full(frame)) => {
                let start = Instant::now();
                self.0.blocking_send(frame).map_err(|_| Cancelled)?;
                Ok(start.elapsed())
            }
        }
    }

    fn is_closed(&self) -> bool {
        self.0.is_closed()
    }
}

/// Writes NDJSON lines; a write error counts as a disconnect.
pub struct WriterSink<W: Write>(pub W);

impl<W: Write> FrameSink for WriterSink<W> {
    fn send(&mut self, frame: StreamFrame) -> Result<Duration, Cancelled> {
        let start = Instant::now();
        self.0
            .write_all(encode_frame(&frame).as_bytes())
            .map_err(|_| Cancelled)?;
        self.0.flush().map_err(|_| Cancelled)?;
        Ok(start.elapsed())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionOutcome {
    Completed { events: u64 },
    Rejected,
    Cancelled,
}

pub fn hello(snapshot: &Snapshot) -> StreamFrame {
    let bounds = snapshot.time_bounds();
    StreamFrame::Hello {
        protocol_version: PROTOCOL_VERSION,
        capture_start: bounds.map(|b| b.0),
        capture_end: bounds.map(|b| b.1),
    }
}

/// Parse the client's query message.
pub fn parse_query(text: &str) -> Result<TrafficQuery, String> {
    let q: TrafficQuery = serde_json::from_str(text).map_err(|e| e.to_string())?;
    q.validate().map_err(|e| e.to_string())?;
    Ok(q)
}

/// Run a whole session, starting with `hello`.
pub fn run_session(
    snapshot: Arc<Snapshot>,
    query: Result<TrafficQuery, String>,
    sink: &mut impl FrameSink,
    config: &SessionConfig,
    guard: Option<&SessionGuard>,
) -> SessionOutcome {
    match stream(snapshot, query, sink, config, guard) {
        Ok(outcome) => outcome,
        Err(Cancelled) => SessionOutcome::Cancelled,
    }
}

fn stream(
    snapshot: Arc<Snapshot>,
    query: Result<TrafficQuery, String>,
    sink: &mut impl FrameSink,
    config: &SessionConfig,
    guard: Option<&SessionGuard>,
) -> Result<SessionOutcome, Cancelled> {
    sink.send(hello(&snapshot))?;
    let query = match query.and_then(|q| snapshot.query(&q).map(|it| (q, it)).map_err(|e| e.to_string())) {
        Ok(q) => q,
        Err(message) => {
            sink.send(StreamFrame::Error {
                code: ErrorCode::InvalidQuery,
                message,
            })?;
            return Ok(SessionOutcome::Rejected);
        }
    };
    let (query, first_pass) = query;
    let batch = config.batch.max(1);
    let lan = snapshot.resolver().lan();
    let identities = snapshot.identities();

    let mut topology = SceneBuilder::new(lan, identities);
    for rec in first_pass {
        topology.push(&rec);
        if sink.is_closed() {
            return Err(Cancelled);
        }
    }
    let scene = topology.finish();
    send_chunked(sink, scene.nodes, batch, |nodes| StreamFrame::Devices { nodes })?;
    send_chunked(sink, scene.connections, batch, |connections| StreamFrame::Connections {
        connections,
    })?;

    let mut clock = ReplayClock::new(query.time_scale, Instant::now());
    let mut events = SceneBuilder::new(lan, identities);
    let mut pending = Vec::with_capacity(batch);
    let mut emitted = 0u64;
    let mut last_progress = Instant::now();
    let second_pass = snapshot.query(&query).expect("query validated above");
    for rec in second_pass {
        let event = events.push(&rec);
        if clock.is_paced() {
            let due = clock.due(event.timestamp);
            if due > Instant::now() {
                flush(sink, &mut pending, &mut clock)?;
                wait_until(due, sink)?;
            }
        }
        let replay_ts = event.timestamp;
        pending.push(event);
        emitted += 1;
        if pending.len() >= batch {
            flush(sink, &mut pending, &mut clock)?;
        }
        if last_progress.elapsed() >= config.progress_every {
            flush(sink, &mut pending, &mut clock)?;
            let blocked = sink.send(StreamFrame::Progress { replay_ts, emitted })?;
            clock.pause_for(blocked);
            last_progress = Instant::now();
            if let Some(g) = guard {
                g.set_emitted(emitted);
            }
        }
    }
    flush(sink, &mut pending, &mut clock)?;
    if let Some(g) = guard {
        g.set_emitted(emitted);
    }
    sink.send(StreamFrame::End { events: emitted })?;
    Ok(SessionOutcome::Completed { events: emitted })
}

/// Always sends at least one frame, so an empty topology still produces an
/// empty `devices` and `connections` frame.
fn send_chunked<T>(
    sink: &mut impl FrameSink,
    items: Vec<T>,
    batch: usize,
    wrap: impl Fn(Vec<T>) -> StreamFrame,
) -> Result<(), Cancelled> {
    let mut items = items.into_iter().peekable();
    loop {
        let chunk: Vec<T> = items.by_ref().take(batch).collect();
        sink.send(wrap(chunk))?;
        if items.peek().is_none() {
            return Ok(());
        }
    }
}

fn flush(
    sink: &mut impl FrameSink,
    pending: &mut Vec<homeviz_core::PacketEvent>,
    clock: &mut ReplayClock,
) -> Result<(), Cancelled> {
    if pending.is_empty() {
        return Ok(());
    }
    let events = std::mem::take(pending);
    let blocked = sink.send(StreamFrame::Packets { events })?;
    clock.pause_for(blocked);
    Ok(())
}

fn wait_until(deadline: Instant, sink: &impl FrameSink) -> Result<(), Cancelled> {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return Ok(());
        }
        if sink.is_closed() {
            return Err(Cancelled);
        }
        std::thread::sleep((deadline - now).min(POLL_SLICE));
    }
}
