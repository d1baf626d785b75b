//! Durable packet store with an identity cache and filtered, ordered queries.
//!
//! Writes go through a single writer lock. Every successful append publishes
//! a new immutable [`Snapshot`] (records plus identities) behind an `Arc`;
//! readers clone the current `Arc` and never wait on the writer.
//!
//! In memory each segment keeps its records sorted by `(timestamp,
//! sequence)`, so a query is a lazy k-way merge over the segments whose
//! min/max timestamps overlap the requested range.

mod analytics;
mod query;
mod segment;

pub use analytics::{NodeAnalytics, PeerCount, TOP_PEERS};
pub use query::{QueryError, QueryIter, TrafficQuery};

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::identity::{DeviceIdentity, DeviceKey, IdentityCache, IdentityResolver};
use crate::packet::PacketRecord;
use crate::time::Timestamp;
use segment::SegmentFile;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage full: {used} of {limit} bytes used, batch needs {requested}")]
    StorageFull { limit: u64, used: u64, requested: u64 },
    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    InvalidQuery(#[from] QueryError),
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    /// Records per segment before a new one is started. A single batch is
    /// never split, so a segment can exceed this by one batch.
    pub segment_capacity: u64,
    /// Cap on total segment log bytes.
    pub max_bytes: Option<u64>,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            segment_capacity: 1 << 16,
            max_bytes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppendReceipt {
    pub count: u64,
    pub first_sequence: Option<u64>,
    pub last_sequence: Option<u64>,
    /// Identities created by this batch.
    pub new_devices: u64,
}

/// Records of one segment, sorted by `(timestamp, sequence)`.
#[derive(Debug)]
pub struct SegmentView {
    pub id: u64,
    records: Vec<PacketRecord>,
    min_ts: Timestamp,
    max_ts: Timestamp,
}

impl SegmentView {
    fn new(id: u64, mut records: Vec<PacketRecord>) -> Self {
        records.sort_by_key(PacketRecord::order_key);
        let min_ts = records.first().map_or(Timestamp::ZERO, |r| r.timestamp);
        let max_ts = records.last().map_or(Timestamp::ZERO, |r| r.timestamp);
        SegmentView {
            id,
            records,
            min_ts,
            max_ts,
        }
    }

    fn with_batch(&self, batch: &[PacketRecord]) -> Self {
        let mut records = Vec::with_capacity(self.records.len() + batch.len());
        records.extend_from_slice(&self.records);
        records.extend_from_slice(batch);
        SegmentView::new(self.id, records)
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    fn overlaps(&self, from: Option<Timestamp>, to: Option<Timestamp>) -> bool {
        !self.records.is_empty() && from.is_none_or(|f| self.max_ts >= f) && to.is_none_or(|t| self.min_ts < t)
    }
}

/// Immutable, consistent view of the store at one instant.
#[derive(Debug)]
pub struct Snapshot {
    segments: Vec<Arc<SegmentView>>,
    identities: Arc<BTreeMap<DeviceKey, DeviceIdentity>>,
    resolver: Arc<IdentityResolver>,
}

impl Snapshot {
    pub fn resolver(&self) -> &Arc<IdentityResolver> {
        &self.resolver
    }

    pub fn identities(&self) -> &BTreeMap<DeviceKey, DeviceIdentity> {
        &self.identities
    }

    pub fn segments(&self) -> &[Arc<SegmentView>] {
        &self.segments
    }

    pub fn record_count(&self) -> u64 {
        self.segments.iter().map(|s| s.records.len() as u64).sum()
    }

    /// Earliest and latest stored timestamps, from segment metadata only.
    pub fn time_bounds(&self) -> Option<(Timestamp, Timestamp)> {
        self.segments
            .iter()
            .filter(|s| !s.records.is_empty())
            .map(|s| (s.min_ts, s.max_ts))
            .reduce(|(a, b), (c, d)| (a.min(c), b.max(d)))
    }

    /// Run `query` against this snapshot. Results are produced lazily.
    pub fn query(self: &Arc<Self>, query: &TrafficQuery) -> Result<QueryIter, QueryError> {
        QueryIter::new(self.clone(), query)
    }

    pub fn summarize(
        self: &Arc<Self>,
        key: &DeviceKey,
        from: Option<Timestamp>,
        to: Option<Timestamp>,
    ) -> NodeAnalytics {
        analytics::summarize(self, key, from, to)
    }
}

struct Writer {
    active: SegmentFile,
    cache: IdentityCache,
    next_seq: u64,
    total_bytes: u64,
}

pub struct TrafficStore {
    dir: PathBuf,
    config: StoreConfig,
    resolver: Arc<IdentityResolver>,
    writer: Mutex<Writer>,
    current: RwLock<Arc<Snapshot>>,
}

impl TrafficStore {
    /// Open (or create) a store in `dir`. The identity cache is rebuilt by
    /// folding every persisted record through `resolver`.
    pub fn open(dir: impl AsRef<Path>, resolver: IdentityResolver, config: StoreConfig) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_owned();
        std::fs::create_dir_all(&dir)?;
        let resolver = Arc::new(resolver);
        let mut cache = IdentityCache::new(resolver.clone());
        let mut segments = Vec::new();
        let mut next_seq = 1;
        let mut total_bytes = 0;
        let mut active = None;

        for id in segment::list_segments(&dir)? {
            let (file, records) = SegmentFile::open(&dir, id)?;
            for r in &records {
                cache.upsert(r);
            }
            if let Some(last) = file.index.last_seq {
                next_seq = next_seq.max(last + 1);
            }
            total_bytes += file.index.committed_len;
            segments.push(Arc::new(SegmentView::new(id, records)));
            active = Some(file);
        }
        let active = match active {
            Some(a) => a,
            None => {
                let file = SegmentFile::create(&dir, 1)?;
                segments.push(Arc::new(SegmentView::new(1, Vec::new())));
                file
            }
        };

        let snapshot = Snapshot {
            segments,
            identities: Arc::new(cache.snapshot()),
            resolver: resolver.clone(),
        };
        Ok(TrafficStore {
            dir,
            config,
            resolver,
            writer: Mutex::new(Writer {
                active,
                cache,
                next_seq,
                total_bytes,
            }),
            current: RwLock::new(Arc::new(snapshot)),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn resolver(&self) -> &Arc<IdentityResolver> {
        &self.resolver
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().clone()
    }

    /// Persist a batch, numbering its records and folding them into the
    /// identity cache. Records without a scope are classified here.
    ///
    /// The batch is durable before this returns, and readers observe the new
    /// records and the updated identities together.
    pub fn append_batch(&self, mut records: Vec<PacketRecord>) -> Result<AppendReceipt, StoreError> {
        let mut w = self.writer.lock();
        if records.is_empty() {
            return Ok(AppendReceipt {
                count: 0,
                first_sequence: None,
                last_sequence: None,
                new_devices: 0,
            });
        }
        let first = w.next_seq;
        let lan = self.resolver.lan();
        let mut encoded = Vec::with_capacity(records.len() * 64);
        for (i, r) in records.iter_mut().enumerate() {
            r.sequence = first + i as u64;
            if r.scope.is_none() {
                r.scope = Some(lan.classify_record(r));
            }
            segment::encode_record(r, &mut encoded);
        }
        let requested = encoded.len() as u64;
        if let Some(limit) = self.config.max_bytes {
            if w.total_bytes + requested > limit {
                return Err(StoreError::StorageFull {
                    limit,
                    used: w.total_bytes,
                    requested,
                });
            }
        }

        if w.active.index.count > 0 && w.active.index.count + records.len() as u64 > self.config.segment_capacity {
            let id = w.active.id() + 1;
            w.active = SegmentFile::create(&self.dir, id)?;
        }
        w.active.append(&encoded, &records).map_err(|e| match e.kind() {
            io::ErrorKind::StorageFull => StoreError::StorageFull {
                limit: self.config.max_bytes.unwrap_or(0),
                used: w.total_bytes,
                requested,
            },
            _ => StoreError::Io(e),
        })?;
        w.total_bytes += requested;
        w.next_seq += records.len() as u64;

        let known = w.cache.len();
        for r in &records {
            w.cache.upsert(r);
        }
        let new_devices = (w.cache.len() - known) as u64;
        let mut segments = self.snapshot().segments.clone();
        if segments.last().map(|s| s.id) != Some(w.active.id()) {
            segments.push(Arc::new(SegmentView::new(w.active.id(), Vec::new())));
        }
        let tail = segments.last_mut().expect("active segment view");
        *tail = Arc::new(tail.with_batch(&records));
        let snapshot = Snapshot {
            segments,
            identities: Arc::new(w.cache.snapshot()),
            resolver: self.resolver.clone(),
        };
        *self.current.write() = Arc::new(snapshot);

        Ok(AppendReceipt {
            count: records.len() as u64,
            first_sequence: Some(first),
            last_sequence: Some(first + records.len() as u64 - 1),
            new_devices,
        })
    }

    /// Filtered records ordered by `(timestamp, sequence)`, produced lazily
    /// from a snapshot taken now.
    pub fn query(&self, query: &TrafficQuery) -> Result<QueryIter, StoreError> {
        Ok(self.snapshot().query(query)?)
    }

    pub fn summarize(&self, key: &DeviceKey, from: Option<Timestamp>, to: Option<Timestamp>) -> NodeAnalytics {
        self.snapshot().summarize(key, from, to)
    }

    /// All identities, sorted by key.
    pub fn list_devices(&self) -> Vec<DeviceIdentity> {
        self.snapshot().identities.values().cloned().collect()
    }
}
