use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::query::{QueryIter, RecordFilter};
use super::Snapshot;
use crate::identity::DeviceKey;
use crate::packet::AppProtocol;
use crate::time::Timestamp;

pub const TOP_PEERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerCount {
    pub key: DeviceKey,
    pub packets: u64,
}

/// Aggregates over the records where `key` is source or destination.
/// `histogram` always sums to `packets`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeAnalytics {
    pub key: DeviceKey,
    pub packets: u64,
    pub bytes: u64,
    pub histogram: BTreeMap<AppProtocol, u64>,
    /// Descending by packet count, ties broken by key ascending.
    pub top_peers: Vec<PeerCount>,
    pub first_seen: Option<Timestamp>,
    pub last_seen: Option<Timestamp>,
}

impl NodeAnalytics {
    pub fn empty(key: DeviceKey) -> Self {
        NodeAnalytics {
            key,
            packets: 0,
            bytes: 0,
            histogram: BTreeMap::new(),
            top_peers: Vec::new(),
            first_seen: None,
            last_seen: None,
        }
    }
}

pub(crate) fn summarize(
    snapshot: &Arc<Snapshot>,
    key: &DeviceKey,
    from: Option<Timestamp>,
    to: Option<Timestamp>,
) -> NodeAnalytics {
    let mut out = NodeAnalytics::empty(*key);
    // An empty or inverted range matches nothing.
    if let (Some(f), Some(t)) = (from, to) {
        if f >= t {
            return out;
        }
    }
    let lan = snapshot.resolver.lan();
    let mut peers: HashMap<DeviceKey, u64> = HashMap::new();
    for rec in QueryIter::with_filter(snapshot.clone(), RecordFilter::device_only(*key), from, to, None) {
        out.packets += 1;
        out.bytes += u64::from(rec.length);
        *out.histogram.entry(rec.app).or_default() += 1;
        // Records arrive in time order.
        out.first_seen.get_or_insert(rec.timestamp);
        out.last_seen = Some(rec.timestamp);
        let (src, dst) = lan.endpoint_keys(&rec);
        let peer = if src == *key { dst } else { src };
        if peer != *key {
            *peers.entry(peer).or_default() += 1;
        }
    }
    let mut ranked: Vec<PeerCount> = peers
        .into_iter()
        .map(|(key, packets)| PeerCount { key, packets })
        .collect();
    ranked.sort_by(|a, b| b.packets.cmp(&a.packets).then(a.key.cmp(&b.key)));
    ranked.truncate(TOP_PEERS);
    out.top_peers = ranked;
    out
}
