use std::net::IpAddr;

use ipnet::IpNet;

use super::{DeviceKey, IdentityError};
use crate::mac::MacAddr;
use crate::packet::{PacketRecord, Scope};

/// The home network's address space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanConfig {
    prefixes: Vec<IpNet>,
    gateway_mac: Option<MacAddr>,
}

impl Default for LanConfig {
    /// RFC 1918 IPv4 ranges plus IPv6 link-local and unique-local space.
    fn default() -> Self {
        let prefixes = ["10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16", "fe80::/10", "fc00::/7"]
            .iter()
            .map(|p| p.parse().expect("static prefix"))
            .collect();
        LanConfig {
            prefixes,
            gateway_mac: None,
        }
    }
}

impl LanConfig {
    pub fn new(prefixes: Vec<IpNet>, gateway_mac: Option<MacAddr>) -> Result<Self, IdentityError> {
        if prefixes.is_empty() {
            return Err(IdentityError::InvalidLan(
                "at least one local prefix is required".into(),
            ));
        }
        let prefixes = prefixes.into_iter().map(|p| p.trunc()).collect();
        Ok(LanConfig { prefixes, gateway_mac })
    }

    pub fn from_cidrs<S: AsRef<str>>(cidrs: &[S], gateway_mac: Option<MacAddr>) -> Result<Self, IdentityError> {
        let prefixes = cidrs
            .iter()
            .map(|c| {
                c.as_ref()
                    .parse::<IpNet>()
                    .map_err(|e| IdentityError::InvalidLan(format!("{}: {e}", c.as_ref())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(prefixes, gateway_mac)
    }

    pub fn prefixes(&self) -> &[IpNet] {
        &self.prefixes
    }

    pub fn gateway_mac(&self) -> Option<MacAddr> {
        self.gateway_mac
    }

    pub fn contains(&self, ip: IpAddr) -> bool {
        self.prefixes.iter().any(|p| p.contains(&ip))
    }

    /// Multicast, limited broadcast, or the directed broadcast of a local
    /// IPv4 prefix.
    pub fn is_group_destination(&self, ip: IpAddr) -> bool {
        match ip {
            IpAddr::V4(v4) => {
                v4.is_multicast()
                    || v4.is_broadcast()
                    || self.prefixes.iter().any(|p| match p {
                        IpNet::V4(net) => net.prefix_len() <= 30 && net.broadcast() == v4,
                        IpNet::V6(_) => false,
                    })
            }
            IpAddr::V6(v6) => v6.is_multicast(),
        }
    }

    fn is_local_side(&self, ip: IpAddr) -> bool {
        self.contains(ip) || ip.is_unspecified()
    }

    /// Scope of a packet with both addresses known.
    pub fn classify(&self, src: IpAddr, dst: IpAddr) -> Scope {
        if self.is_group_destination(dst) {
            return Scope::Special;
        }
        match (self.is_local_side(src), self.is_local_side(dst)) {
            (true, false) => Scope::LocalToRemote,
            (false, true) => Scope::RemoteToLocal,
            (true, true) => Scope::Internal,
            (false, false) => Scope::External,
        }
    }

    /// Scope of a record; records without an IP layer are special.
    pub fn classify_record(&self, rec: &PacketRecord) -> Scope {
        match (rec.src_ip, rec.dst_ip) {
            (Some(src), Some(dst)) => self.classify(src, dst),
            _ => Scope::Special,
        }
    }

    /// Scene/identity key of one packet endpoint: its MAC when the address
    /// is on the LAN (or absent), its IP otherwise.
    pub fn endpoint_key(&self, mac: MacAddr, ip: Option<IpAddr>) -> DeviceKey {
        match ip {
            Some(ip) if !self.is_local_side(ip) => DeviceKey::Ip(ip),
            _ => DeviceKey::Mac(mac),
        }
    }

    /// `(source, destination)` keys of a record.
    pub fn endpoint_keys(&self, rec: &PacketRecord) -> (DeviceKey, DeviceKey) {
        (
            self.endpoint_key(rec.src_mac, rec.src_ip),
            self.endpoint_key(rec.dst_mac, rec.dst_ip),
        )
    }
}

/// Free-function form of [`LanConfig::classify`].
pub fn classify_scope(src: IpAddr, dst: IpAddr, lan: &LanConfig) -> Scope {
    lan.classify(src, dst)
}
