//! Visual model: clustered, positioned nodes, first-contact connections,
//! and per-packet events that reference them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::identity::{Continent, DeviceIdentity, DeviceKey, LanConfig, Location, Role};
use crate::packet::{AppProtocol, PacketRecord, Transport};
use crate::time::Timestamp;

pub const ANCHOR_RADIUS: f64 = 10.0;
pub const RING_RADIUS: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClusterId {
    Home,
    /// `Continent::Unknown` is the "unknown" cluster.
    Region(Continent),
}

impl ClusterId {
    pub const UNKNOWN: ClusterId = ClusterId::Region(Continent::Unknown);

    pub fn as_str(self) -> &'static str {
        match self {
            ClusterId::Home => "home",
            ClusterId::Region(c) => c.code(),
        }
    }

    /// Where the cluster's ring is centred.
    pub fn anchor(self) -> Position {
        match self {
            ClusterId::Home => Position::ORIGIN,
            ClusterId::Region(c) => {
                let angle = TAU * c.index() as f64 / Continent::ALL.len() as f64;
                Position {
                    x: ANCHOR_RADIUS * angle.cos(),
                    y: 0.0,
                    z: ANCHOR_RADIUS * angle.sin(),
                }
            }
        }
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClusterId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "home" {
            Ok(ClusterId::Home)
        } else {
            s.parse().map(ClusterId::Region)
        }
    }
}

impl Serialize for ClusterId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ClusterId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Scene coordinates; serialized as `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0, z: 0.0 };

    pub fn distance(self, other: Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }
}

impl From<[f64; 3]> for Position {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Position { x, y, z }
    }
}

impl From<Position> for [f64; 3] {
    fn from(p: Position) -> Self {
        [p.x, p.y, p.z]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneNode {
    pub key: DeviceKey,
    pub cluster: ClusterId,
    pub position: Position,
    pub vendor: Option<String>,
    pub display_name: String,
    pub role: Role,
}

/// Undirected edge; `a <= b` always.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub id: u64,
    pub a: DeviceKey,
    pub b: DeviceKey,
    pub first_contact: Timestamp,
    pub packets: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketEvent {
    pub sequence: u64,
    pub timestamp: Timestamp,
    pub src: DeviceKey,
    pub dst: DeviceKey,
    pub connection: u64,
    pub app: AppProtocol,
    pub transport: Option<Transport>,
    pub length: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SceneError {
    #[error("no node {0} in scene")]
    UnknownNode(DeviceKey),
}

pub fn assign_cluster(identity: &DeviceIdentity) -> ClusterId {
    match (identity.role, &identity.location) {
        (Role::Local | Role::Gateway, _) => ClusterId::Home,
        (Role::Remote, Location::Geo(g)) => ClusterId::Region(g.continent),
        _ => ClusterId::UNKNOWN,
    }
}

/// Positions for a set of clustered nodes. The result depends only on the
/// set, not on input order.
pub fn layout<'a>(nodes: impl IntoIterator<Item = (&'a DeviceKey, ClusterId)>) -> BTreeMap<DeviceKey, Position> {
    let mut by_cluster: BTreeMap<ClusterId, BTreeSet<DeviceKey>> = BTreeMap::new();
    for (key, cluster) in nodes {
        by_cluster.entry(cluster).or_default().insert(*key);
    }
    let mut out = BTreeMap::new();
    for (cluster, keys) in by_cluster {
        let anchor = cluster.anchor();
        let n = keys.len() as f64;
        for (j, key) in keys.into_iter().enumerate() {
            let angle = TAU * j as f64 / n;
            out.insert(
                key,
                Position {
                    x: anchor.x + RING_RADIUS * angle.cos(),
                    y: 0.0,
                    z: anchor.z + RING_RADIUS * angle.sin(),
                },
            );
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    /// Sorted by key.
    pub nodes: Vec<SceneNode>,
    /// Sorted by id, which is first-contact order.
    pub connections: Vec<Connection>,
}

impl Scene {
    pub fn node(&self, key: &DeviceKey) -> Option<&SceneNode> {
        self.nodes
            .binary_search_by(|n| n.key.cmp(key))
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn connection(&self, id: u64) -> Option<&Connection> {
        self.connections.get(id as usize).filter(|c| c.id == id)
    }

    /// Ids of every connection with `key` as an endpoint.
    pub fn connections_of(&self, key: &DeviceKey) -> Result<BTreeSet<u64>, SceneError> {
        if self.node(key).is_none() {
            return Err(SceneError::UnknownNode(*key));
        }
        Ok(self
            .connections
            .iter()
            .filter(|c| c.a == *key || c.b == *key)
            .map(|c| c.id)
            .collect())
    }
}

/// Streaming fold from ordered records to a [`Scene`].
///
/// Identities missing from the supplied map get a fallback node: MAC keys go
/// to "home", IP keys to "unknown".
pub struct SceneBuilder<'a> {
    lan: &'a LanConfig,
    identities: &'a BTreeMap<DeviceKey, DeviceIdentity>,
    nodes: BTreeSet<DeviceKey>,
    pairs: HashMap<(DeviceKey, DeviceKey), u64>,
    connections: Vec<Connection>,
}

impl<'a> SceneBuilder<'a> {
    pub fn new(lan: &'a LanConfig, identities: &'a BTreeMap<DeviceKey, DeviceIdentity>) -> Self {
        SceneBuilder {
            lan,
            identities,
            nodes: BTreeSet::new(),
            pairs: HashMap::new(),
            connections: Vec::new(),
        }
    }

    pub fn push(&mut self, rec: &PacketRecord) -> PacketEvent {
        let (src, dst) = self.lan.endpoint_keys(rec);
        self.nodes.insert(src);
        self.nodes.insert(dst);
        let pair = if src <= dst { (src, dst) } else { (dst, src) };
        let next_id = self.connections.len() as u64;
        let id = *self.pairs.entry(pair).or_insert(next_id);
        if id == next_id {
            self.connections.push(Connection {
                id,
                a: pair.0,
                b: pair.1,
                first_contact: rec.timestamp,
                packets: 0,
            });
        }
        let conn = &mut self.connections[id as usize];
        conn.packets += 1;
        // Holds even if the caller breaks the ordering precondition.
        conn.first_contact = conn.first_contact.min(rec.timestamp);
        PacketEvent {
            sequence: rec.sequence,
            timestamp: rec.timestamp,
            src,
            dst,
            connection: id,
            app: rec.app,
            transport: rec.transport,
            length: rec.length,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn finish(self) -> Scene {
        let clusters: Vec<(DeviceKey, ClusterId, Option<&DeviceIdentity>)> = self
            .nodes
            .iter()
            .map(|k| {
                let ident = self.identities.get(k);
                let cluster = match (ident, k) {
                    (Some(i), _) => assign_cluster(i),
                    (None, DeviceKey::Mac(_)) => ClusterId::Home,
                    (None, DeviceKey::Ip(_)) => ClusterId::UNKNOWN,
                };
                (*k, cluster, ident)
            })
            .collect();
        let positions = layout(clusters.iter().map(|(k, c, _)| (k, *c)));
        let nodes = clusters
            .into_iter()
            .map(|(key, cluster, ident)| SceneNode {
                key,
                cluster,
                position: positions[&key],
                vendor: ident.and_then(|i| i.vendor.clone()),
                display_name: ident.map_or_else(|| key.to_string(), |i| i.display_name.clone()),
                role: ident.map_or(
                    match key {
                        DeviceKey::Mac(_) => Role::Local,
                        DeviceKey::Ip(_) => Role::Remote,
                    },
                    |i| i.role,
                ),
            })
            .collect();
        Scene {
            nodes,
            connections: self.connections,
        }
    }
}

/// Build the whole scene and its event list in one pass.
pub fn build_scene<'r>(
    records: impl IntoIterator<Item = &'r PacketRecord>,
    lan: &LanConfig,
    identities: &BTreeMap<DeviceKey, DeviceIdentity>,
) -> (Scene, Vec<PacketEvent>) {
    let mut builder = SceneBuilder::new(lan, identities);
    let events = records.into_iter().map(|r| builder.push(r)).collect();
    (builder.finish(), events)
}
