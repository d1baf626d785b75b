use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::mac::MacAddr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KeyKind {
    LocalMac,
    RemoteIp,
}

/// Stable identifier of one scene node.
///
/// Text form is `mac:aa:bb:cc:dd:ee:ff` or `ip:<canonical address>`; that is
/// also the JSON encoding. Keys order MAC-keyed devices first, then IPs
/// numerically (IPv4 before IPv6).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeviceKey {
    Mac(MacAddr),
    Ip(IpAddr),
}

impl DeviceKey {
    pub fn kind(&self) -> KeyKind {
        match self {
            DeviceKey::Mac(_) => KeyKind::LocalMac,
            DeviceKey::Ip(_) => KeyKind::RemoteIp,
        }
    }
}

impl fmt::Display for DeviceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceKey::Mac(m) => write!(f, "mac:{m}"),
            DeviceKey::Ip(ip) => write!(f, "ip:{ip}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid device key {0:?}: expected mac:<address> or ip:<address>")]
pub struct ParseKeyError(pub String);

impl FromStr for DeviceKey {
    type Err = ParseKeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseKeyError(s.to_owned());
        if let Some(mac) = s.strip_prefix("mac:") {
            mac.parse().map(DeviceKey::Mac).map_err(|_| err())
        } else if let Some(ip) = s.strip_prefix("ip:") {
            ip.parse().map(DeviceKey::Ip).map_err(|_| err())
        } else {
            Err(err())
        }
    }
}

impl Serialize for DeviceKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DeviceKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
