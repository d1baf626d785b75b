//! Device identity: who is behind each packet endpoint.
//!
//! Local devices are keyed by MAC address and remote endpoints by IP address
//! (from inside the LAN every remote host shares the gateway's MAC). The
//! [`IdentityCache`] folds packet records into per-device metadata: vendor
//! from the OUI registry, coarse location from the geo snapshot, role and
//! traffic counters.

mod cache;
mod geo;
mod key;
mod lan;
mod oui;

pub use cache::{DeviceIdentity, IdentityCache, IdentityResolver, Location, Role, Upserted};
pub use geo::{Continent, GeoDb, GeoLocation};
pub use key::{DeviceKey, KeyKind, ParseKeyError};
pub use lan::{classify_scope, LanConfig};
pub use oui::OuiRegistry;

use std::net::AddrParseError;

#[derive(Debug, thiserror::Error)]
pub enum IdentityError {
    #[error(transparent)]
    InvalidMac(#[from] crate::mac::InvalidMac),
    #[error("invalid IP address {0:?}")]
    InvalidIp(String),
    #[error("invalid LAN configuration: {0}")]
    InvalidLan(String),
    #[error("snapshot line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IdentityError {
    fn invalid_ip(s: &str, _: AddrParseError) -> Self {
        IdentityError::InvalidIp(s.to_owned())
    }
}
