use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Snapshot;
use crate::identity::DeviceKey;
use crate::packet::{AppProtocol, PacketRecord, Scope, Transport};
use crate::time::Timestamp;

/// A user query over stored traffic.
///
/// Every filter is optional. `apps` and `transports` together form the
/// protocol filter: when either is given, a record passes if its application
/// protocol is in `apps` or its transport is in `transports`. Empty sets are
/// treated as absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficQuery {
    /// Inclusive lower bound.
    pub from: Option<Timestamp>,
    /// Exclusive upper bound.
    pub to: Option<Timestamp>,
    /// Only packets where this device is source or destination.
    pub device: Option<DeviceKey>,
    pub apps: Option<BTreeSet<AppProtocol>>,
    pub transports: Option<BTreeSet<Transport>>,
    pub scopes: Option<BTreeSet<Scope>>,
    /// Keep only the earliest `limit` matches.
    pub limit: Option<u64>,
    /// Replay speed: 0 emits without pacing, 1 is real time, 2 twice as fast.
    pub time_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid query: {0}")]
pub struct QueryError(pub String);

impl TrafficQuery {
    pub fn validate(&self) -> Result<(), QueryError> {
        if let (Some(from), Some(to)) = (self.from, self.to) {
            if from >= to {
                return Err(QueryError(format!("start {from} must precede end {to}")));
            }
        }
        if self.limit == Some(0) {
            return Err(QueryError("limit must be at least 1".into()));
        }
        if !self.time_scale.is_finite() || self.time_scale < 0.0 {
            return Err(QueryError(format!(
                "time scale {} must be a finite value >= 0",
                self.time_scale
            )));
        }
        Ok(())
    }

    fn non_empty<T: Ord + Copy>(set: &Option<BTreeSet<T>>) -> Option<&BTreeSet<T>> {
        set.as_ref().filter(|s| !s.is_empty())
    }
}

/// Compiled, time-independent part of a query.
#[derive(Debug, Clone)]
pub(crate) struct RecordFilter {
    device: Option<DeviceKey>,
    apps: Option<BTreeSet<AppProtocol>>,
    transports: Option<BTreeSet<Transport>>,
    scopes: Option<BTreeSet<Scope>>,
}

impl RecordFilter {
    pub(crate) fn new(q: &TrafficQuery) -> Self {
        RecordFilter {
            device: q.device,
            apps: TrafficQuery::non_empty(&q.apps).cloned(),
            transports: TrafficQuery::non_empty(&q.transports).cloned(),
            scopes: TrafficQuery::non_empty(&q.scopes).cloned(),
        }
    }

    pub(crate) fn device_only(key: DeviceKey) -> Self {
        RecordFilter {
            device: Some(key),
            apps: None,
            transports: None,
            scopes: None,
        }
    }

    pub(crate) fn matches(&self, rec: &PacketRecord, snapshot: &Snapshot) -> bool {
        if let Some(key) = &self.device {
            let (src, dst) = snapshot.resolver.lan().endpoint_keys(rec);
            if src != *key && dst != *key {
                return false;
            }
        }
        if self.apps.is_some() || self.transports.is_some() {
            let app_hit = self.apps.as_ref().is_some_and(|a| a.contains(&rec.app));
            let transport_hit = match (&self.transports, rec.transport) {
                (Some(t), Some(tr)) => t.contains(&tr),
                _ => false,
            };
            if !app_hit && !transport_hit {
                return false;
            }
        }
        if let Some(scopes) = &self.scopes {
            if !rec.scope.is_some_and(|s| scopes.contains(&s)) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug)]
struct Cursor {
    segment: usize,
    pos: usize,
    end: usize,
}

/// Lazy, ordered query result over one snapshot.
///
/// Each overlapping segment contributes a cursor positioned by binary search
/// on the time range; a min-heap merges cursors by `(timestamp, sequence)`.
pub struct QueryIter {
    snapshot: Arc<Snapshot>,
    filter: RecordFilter,
    cursors: Vec<Cursor>,
    heap: BinaryHeap<Reverse<(Timestamp, u64, usize)>>,
    remaining: Option<u64>,
}

impl QueryIter {
    pub(crate) fn new(snapshot: Arc<Snapshot>, query: &TrafficQuery) -> Result<Self, QueryError> {
        query.validate()?;
        Ok(Self::with_filter(
            snapshot,
            RecordFilter::new(query),
            query.from,
            query.to,
            query.limit,
        ))
    }

    pub(crate) fn with_filter(
        snapshot: Arc<Snapshot>,
        filter: RecordFilter,
        from: Option<Timestamp>,
        to: Option<Timestamp>,
        limit: Option<u64>,
    ) -> Self {
        let mut cursors = Vec::new();
        for (i, seg) in snapshot.segments.iter().enumerate() {
            if !seg.overlaps(from, to) {
                continue;
            }
            let records = &seg.records;
            let pos = from.map_or(0, |f| records.partition_point(|r| r.timestamp < f));
            let end = to.map_or(records.len(), |t| records.partition_point(|r| r.timestamp < t));
            if pos < end {
                cursors.push(Cursor { segment: i, pos, end });
            }
        }
        let mut it = QueryIter {
            snapshot,
            filter,
            cursors,
            heap: BinaryHeap::new(),
            remaining: limit,
        };
        for c in 0..it.cursors.len() {
            it.seek(c);
        }
        it
    }

    /// Advance cursor `c` to its next matching record and queue it.
    fn seek(&mut self, c: usize) {
        let cur = &mut self.cursors[c];
        let records = &self.snapshot.segments[cur.segment].records;
        while cur.pos < cur.end {
            let r = &records[cur.pos];
            if self.filter.matches(r, &self.snapshot) {
                self.heap.push(Reverse((r.timestamp, r.sequence, c)));
                return;
            }
            cur.pos += 1;
        }
    }

    pub fn snapshot(&self) -> &Arc<Snapshot> {
        &self.snapshot
    }
}

impl Iterator for QueryIter {
    type Item = PacketRecord;

    fn next(&mut self) -> Option<PacketRecord> {
        if self.remaining == Some(0) {
            return None;
        }
        let Reverse((_, _, c)) = self.heap.pop()?;
        let cur = &mut self.cursors[c];
        let rec = self.snapshot.segments[cur.segment].records[cur.pos];
        cur.pos += 1;
        self.seek(c);
        if let Some(n) = self.remaining.as_mut() {
            *n -= 1;
        }
        Some(rec)
    }
}
