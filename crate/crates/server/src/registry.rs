//! Live stream sessions. An entry exists exactly as long as its
//! [`SessionGuard`]; dropping the guard (normal end, error, or cancellation)
//! removes it.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use homeviz_core::TrafficQuery;
use parking_lot::Mutex;
use serde::Serialize;

#[derive(Debug)]
struct Entry {
    query: TrafficQuery,
    started: Instant,
    emitted: Arc<AtomicU64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub id: u64,
    pub query: TrafficQuery,
    pub running_ms: u64,
    pub emitted: u64,
}

#[derive(Debug, Default)]
pub struct SessionRegistry {
    next_id: AtomicU64,
    live: Mutex<BTreeMap<u64, Entry>>,
}

impl SessionRegistry {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn register(self: &Arc<Self>, query: TrafficQuery) -> SessionGuard {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed) + 1;
        let emitted = Arc::new(AtomicU64::new(0));
        self.live.lock().insert(
            id,
            Entry {
                query,
                started: Instant::now(),
                emitted: emitted.clone(),
            },
        );
        SessionGuard {
            id,
            emitted,
            registry: self.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.live.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        self.live
            .lock()
            .iter()
            .map(|(id, e)| SessionSummary {
                id: *id,
                query: e.query.clone(),
                running_ms: e.started.elapsed().as_millis() as u64,
                emitted: e.emitted.load(Ordering::Relaxed),
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct SessionGuard {
    id: u64,
    emitted: Arc<AtomicU64>,
    registry: Arc<SessionRegistry>,
}

impl SessionGuard {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn set_emitted(&self, n: u64) {
        self.emitted.store(n, Ordering::Relaxed);
    }
}

impl Drop for SessionGuard {
    fn drop(&mut self) {
        self.registry.live.lock().remove(&self.id);
    }
}
