use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::net::IpAddr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DeviceKey, GeoDb, GeoLocation, LanConfig, OuiRegistry};
use crate::mac::MacAddr;
use crate::packet::PacketRecord;
use crate::time::Timestamp;

/// Distinct remote IPs behind one MAC before it counts as the gateway.
const GATEWAY_REMOTE_IPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Local,
    Remote,
    Gateway,
    /// Broadcast and multicast pseudo-endpoints.
    Special,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Location {
    /// Inside the home network.
    Home,
    Geo(GeoLocation),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceIdentity {
    pub key: DeviceKey,
    pub vendor: Option<String>,
    pub location: Location,
    pub role: Role,
    pub display_name: String,
    pub first_seen: Timestamp,
    pub last_seen: Timestamp,
    pub packets: u64,
    pub bytes: u64,
}

/// Static lookups behind the cache: LAN boundary, OUI registry, geo snapshot.
#[derive(Debug, Clone)]
pub struct IdentityResolver {
    lan: LanConfig,
    oui: Arc<OuiRegistry>,
    geo: Arc<GeoDb>,
}

impl IdentityResolver {
    pub fn new(lan: LanConfig, oui: Arc<OuiRegistry>, geo: Arc<GeoDb>) -> Self {
        IdentityResolver { lan, oui, geo }
    }

    /// Resolver over the snapshots compiled into the crate.
    pub fn bundled(lan: LanConfig) -> Self {
        Self::new(lan, OuiRegistry::bundled(), GeoDb::bundled())
    }

    pub fn lan(&self) -> &LanConfig {
        &self.lan
    }

    pub fn oui(&self) -> &OuiRegistry {
        &self.oui
    }

    pub fn geo(&self) -> &GeoDb {
        &self.geo
    }

    fn vendor(&self, key: &DeviceKey) -> Option<String> {
        match key {
            DeviceKey::Mac(mac) => self.oui.lookup(mac).map(str::to_owned),
            DeviceKey::Ip(_) => None,
        }
    }

    fn location(&self, key: &DeviceKey, role: Role) -> Location {
        match (key, role) {
            (_, Role::Local | Role::Gateway) => Location::Home,
            (DeviceKey::Ip(ip), _) => Location::Geo(self.geo.locate(*ip).unwrap_or_else(GeoLocation::unknown)),
            (DeviceKey::Mac(_), _) => Location::Geo(GeoLocation::unknown()),
        }
    }

    fn base_role(&self, key: &DeviceKey) -> Role {
        match key {
            DeviceKey::Mac(mac) if mac.is_group() => Role::Special,
            DeviceKey::Mac(mac) if self.lan.gateway_mac() == Some(*mac) => Role::Gateway,
            DeviceKey::Mac(_) => Role::Local,
            DeviceKey::Ip(ip) if self.lan.is_group_destination(*ip) || ip.is_unspecified() => Role::Special,
            DeviceKey::Ip(_) => Role::Remote,
        }
    }

    /// A zero-traffic identity for `key`, as if first seen at `ts`.
    pub fn blank_identity(&self, key: DeviceKey, ts: Timestamp) -> DeviceIdentity {
        let vendor = self.vendor(&key);
        let role = self.base_role(&key);
        DeviceIdentity {
            key,
            display_name: display_name(&key, vendor.as_deref()),
            location: self.location(&key, role),
            vendor,
            role,
            first_seen: ts,
            last_seen: ts,
            packets: 0,
            bytes: 0,
        }
    }
}

fn display_name(key: &DeviceKey, vendor: Option<&str>) -> String {
    match (key, vendor) {
        (DeviceKey::Mac(mac), Some(v)) => format!("{v} ({mac})"),
        (DeviceKey::Mac(mac), None) => mac.to_string(),
        (DeviceKey::Ip(ip), _) => ip.to_string(),
    }
}

/// Keys touched by one [`IdentityCache::upsert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Upserted {
    pub src: DeviceKey,
    pub dst: DeviceKey,
    /// False when the record's sequence number had already been applied.
    pub applied: bool,
}

/// Per-device metadata folded from packet records.
///
/// The fold is order-independent: counters are sums, seen-times are min/max,
/// and gateway promotion depends only on the set of records applied.
#[derive(Debug, Clone)]
pub struct IdentityCache {
    resolver: Arc<IdentityResolver>,
    devices: BTreeMap<DeviceKey, DeviceIdentity>,
    remote_ips_by_mac: HashMap<MacAddr, BTreeSet<IpAddr>>,
    applied: HashSet<u64>,
}

impl IdentityCache {
    pub fn new(resolver: Arc<IdentityResolver>) -> Self {
        IdentityCache {
            resolver,
            devices: BTreeMap::new(),
            remote_ips_by_mac: HashMap::new(),
            applied: HashSet::new(),
        }
    }

    pub fn resolver(&self) -> &Arc<IdentityResolver> {
        &self.resolver
    }

    pub fn get(&self, key: &DeviceKey) -> Option<&DeviceIdentity> {
        self.devices.get(key)
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DeviceIdentity> {
        self.devices.values()
    }

    /// Copy of all identities, ordered by key.
    pub fn snapshot(&self) -> BTreeMap<DeviceKey, DeviceIdentity> {
        self.devices.clone()
    }

    /// Create or merge the identities of both endpoints of `rec`.
    ///
    /// A record whose non-zero sequence number was already applied is a no-op.
    /// Sequence 0 marks a record the store has not numbered yet and is never
    /// deduplicated.
    pub fn upsert(&mut self, rec: &PacketRecord) -> Upserted {
        let (src, dst) = self.resolver.lan().endpoint_keys(rec);
        if rec.sequence != 0 && !self.applied.insert(rec.sequence) {
            return Upserted {
                src,
                dst,
                applied: false,
            };
        }

        for (key, mac) in [(src, rec.src_mac), (dst, rec.dst_mac)] {
            if let DeviceKey::Ip(ip) = key {
                self.note_remote_behind(mac, ip);
            }
        }
        self.touch(src, rec);
        if dst != src {
            self.touch(dst, rec);
        }
        Upserted {
            src,
            dst,
            applied: true,
        }
    }

    fn touch(&mut self, key: DeviceKey, rec: &PacketRecord) {
        let resolver = &self.resolver;
        let promoted = self.is_gateway_mac(&key);
        let id = self
            .devices
            .entry(key)
            .or_insert_with(|| resolver.blank_identity(key, rec.timestamp));
        if id.packets == 0 {
            id.first_seen = rec.timestamp;
            id.last_seen = rec.timestamp;
        } else {
            id.first_seen = id.first_seen.min(rec.timestamp);
            id.last_seen = id.last_seen.max(rec.timestamp);
        }
        id.packets += 1;
        id.bytes += u64::from(rec.length);
        if id.vendor.is_none() {
            id.vendor = resolver.vendor(&key);
            if id.vendor.is_some() {
                id.display_name = display_name(&key, id.vendor.as_deref());
            }
        }
        if promoted && id.role == Role::Local {
            id.role = Role::Gateway;
        }
    }

    fn is_gateway_mac(&self, key: &DeviceKey) -> bool {
        match key {
            DeviceKey::Mac(mac) => self
                .remote_ips_by_mac
                .get(mac)
                .is_some_and(|ips| ips.len() >= GATEWAY_REMOTE_IPS),
            DeviceKey::Ip(_) => false,
        }
    }

    fn note_remote_behind(&mut self, mac: MacAddr, ip: IpAddr) {
        if mac.is_group() || self.resolver.lan().is_group_destination(ip) {
            return;
        }
        let ips = self.remote_ips_by_mac.entry(mac).or_default();
        if ips.len() >= GATEWAY_REMOTE_IPS {
            return;
        }
        ips.insert(ip);
        if ips.len() >= GATEWAY_REMOTE_IPS {
            if let Some(id) = self.devices.get_mut(&DeviceKey::Mac(mac)) {
                if id.role == Role::Local {
                    id.role = Role::Gateway;
                }
            }
        }
    }
}
