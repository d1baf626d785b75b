use std::collections::HashMap;
use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use ipnet::IpNet;
use serde::{Deserialize, Serialize};

use super::IdentityError;

static BUNDLED_GEO: &str = include_str!("../../data/geo.tsv");

/// Continent clusters, in scene anchor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Continent {
    #[serde(rename = "AF")]
    Africa,
    #[serde(rename = "AN")]
    Antarctica,
    #[serde(rename = "AS")]
    Asia,
    #[serde(rename = "EU")]
    Europe,
    #[serde(rename = "NA")]
    NorthAmerica,
    #[serde(rename = "OC")]
    Oceania,
    #[serde(rename = "SA")]
    SouthAmerica,
    #[serde(rename = "unknown")]
    Unknown,
}

impl Continent {
    pub const ALL: [Continent; 8] = [
        Continent::Africa,
        Continent::Antarctica,
        Continent::Asia,
        Continent::Europe,
        Continent::NorthAmerica,
        Continent::Oceania,
        Continent::SouthAmerica,
        Continent::Unknown,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Continent::Africa => "AF",
            Continent::Antarctica => "AN",
            Continent::Asia => "AS",
            Continent::Europe => "EU",
            Continent::NorthAmerica => "NA",
            Continent::Oceania => "OC",
            Continent::SouthAmerica => "SA",
            Continent::Unknown => "unknown",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Continent::Africa => "Africa",
            Continent::Antarctica => "Antarctica",
            Continent::Asia => "Asia",
            Continent::Europe => "Europe",
            Continent::NorthAmerica => "North America",
            Continent::Oceania => "Oceania",
            Continent::SouthAmerica => "South America",
            Continent::Unknown => "Unknown",
        }
    }

    /// Position in [`Continent::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Continent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Continent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Continent::ALL
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| format!("unknown continent code {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeoLocation {
    pub continent: Continent,
    /// ISO 3166-1 alpha-2, lowercase.
    pub country: Option<String>,
}

impl GeoLocation {
    pub fn unknown() -> Self {
        GeoLocation {
            continent: Continent::Unknown,
            country: None,
        }
    }
}

/// One table per prefix length, longest first. A lookup probes at most one
/// hash per distinct prefix length present in the snapshot.
#[derive(Debug, Clone, Default)]
struct PrefixTable<K> {
    by_len: Vec<(u8, HashMap<K, GeoLocation>)>,
}

impl<K: Copy + Eq + std::hash::Hash> PrefixTable<K> {
    fn insert(&mut self, len: u8, network: K, loc: GeoLocation) {
        let pos = match self.by_len.binary_search_by(|(l, _)| len.cmp(l)) {
            Ok(p) => p,
            Err(p) => {
                self.by_len.insert(p, (len, HashMap::new()));
                p
            }
        };
        self.by_len[pos].1.insert(network, loc);
    }

    fn longest_match(&self, mask: impl Fn(u8) -> K) -> Option<&GeoLocation> {
        self.by_len.iter().find_map(|(len, table)| table.get(&mask(*len)))
    }
}

fn mask_v4(addr: u32, len: u8) -> u32 {
    if len == 0 {
        0
    } else {
        addr & (u32::MAX << (32 - u32::from(len)))
    }
}

fn mask_v6(addr: u128, len: u8) -> u128 {
    if len == 0 {
        0
    } else {
        addr & (u128::MAX << (128 - u32::from(len)))
    }
}

/// Longest-prefix-match IP geolocation over a CIDR snapshot.
///
/// Snapshot format: `CIDR<TAB>continent-code<TAB>country-code` per line,
/// continent codes `AF AN AS EU NA OC SA`. `#` comments are skipped.
#[derive(Debug, Clone, Default)]
pub struct GeoDb {
    v4: PrefixTable<u32>,
    v6: PrefixTable<u128>,
    entries: usize,
}

impl GeoDb {
    pub fn parse(text: &str) -> Result<Self, IdentityError> {
        let mut db = GeoDb::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| IdentityError::Snapshot { line: i + 1, reason };
            let fields: Vec<&str> = line.split('\t').collect();
            let [cidr, continent, country] = fields[..] else {
                return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
            };
            let net: IpNet = cidr.parse().map_err(|e| bad(format!("{cidr}: {e}")))?;
            let continent: Continent = continent.parse().map_err(bad)?;
            if continent == Continent::Unknown {
                return Err(bad("continent must be one of AF AN AS EU NA OC SA".into()));
            }
            let country = country.trim().to_ascii_lowercase();
            let loc = GeoLocation {
                continent,
                country: (!country.is_empty()).then_some(country),
            };
            let len = net.prefix_len();
            match net.trunc() {
                IpNet::V4(n) => db.v4.insert(len, u32::from(n.network()), loc),
                IpNet::V6(n) => db.v6.insert(len, u128::from(n.network()), loc),
            }
            db.entries += 1;
        }
        Ok(db)
    }

    pub fn load(path: &Path) -> Result<Self, IdentityError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The sample snapshot compiled into the crate.
    pub fn bundled() -> Arc<GeoDb> {
        static CELL: OnceLock<Arc<GeoDb>> = OnceLock::new();
        CELL.get_or_init(|| Arc::new(Self::parse(BUNDLED_GEO).expect("bundled geo snapshot parses")))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    /// `None` for addresses that never leave the site (private, link-local,
    /// loopback, multicast, unspecified); otherwise the longest matching
    /// prefix, or an unknown location when nothing matches.
    pub fn locate(&self, ip: IpAddr) -> Option<GeoLocation> {
        let ip = match ip {
            IpAddr::V6(v6) => v6.to_ipv4_mapped().map(IpAddr::V4).unwrap_or(ip),
            v4 => v4,
        };
        if !is_routable(ip) {
            return None;
        }
        let hit = match ip {
            IpAddr::V4(v4) => {
                let a = u32::from(v4);
                self.v4.longest_match(|len| mask_v4(a, len))
            }
            IpAddr::V6(v6) => {
                let a = u128::from(v6);
                self.v6.longest_match(|len| mask_v6(a, len))
            }
        };
        Some(hit.cloned().unwrap_or_else(GeoLocation::unknown))
    }

    pub fn locate_str(&self, ip: &str) -> Result<Option<GeoLocation>, IdentityError> {
        let addr: IpAddr = ip.parse().map_err(|e| IdentityError::invalid_ip(ip, e))?;
        Ok(self.locate(addr))
    }
}

fn is_routable_v4(ip: Ipv4Addr) -> bool {
    !(ip.is_private()
        || ip.is_loopback()
        || ip.is_link_local()
        || ip.is_multicast()
        || ip.is_broadcast()
        || ip.is_unspecified())
}

fn is_routable_v6(ip: Ipv6Addr) -> bool {
    let first = ip.segments()[0];
    let link_local = first & 0xffc0 == 0xfe80;
    let unique_local = first & 0xfe00 == 0xfc00;
    !(ip.is_loopback() || ip.is_unspecified() || ip.is_multicast() || link_local || unique_local)
}

pub(crate) fn is_routable(ip: IpAddr) -> bool {
    match ip {
        IpAddr::V4(v4) => is_routable_v4(v4),
        IpAddr::V6(v6) => is_routable_v6(v6),
    }
}
