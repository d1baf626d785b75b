//! Per-packet feature rows and the Ethernet/IP/L4 decoder that produces them.
//!
//! Decoding is total: a layer that cannot be parsed sets
//! [`PacketRecord::malformed`] and leaves every deeper field empty.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use serde::{Deserialize, Serialize};

use crate::mac::MacAddr;
use crate::pcap::{CaptureMeta, RawFrame, LINKTYPE_ETHERNET};
use crate::time::Timestamp;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_ARP: u16 = 0x0806;
pub const ETHERTYPE_VLAN: u16 = 0x8100;
pub const ETHERTYPE_QINQ: u16 = 0x88a8;
pub const ETHERTYPE_IPV6: u16 = 0x86dd;

const ETH_HEADER_LEN: usize = 14;
const VLAN_TAG_LEN: usize = 4;
const MAX_IPV6_EXTENSIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Transport {
    #[serde(rename = "TCP")]
    Tcp,
    #[serde(rename = "UDP")]
    Udp,
    #[serde(rename = "ICMP")]
    Icmp,
    #[serde(rename = "ICMPV6")]
    Icmpv6,
    #[serde(rename = "OTHER")]
    Other,
}

impl Transport {
    pub const ALL: [Transport; 5] = [
        Transport::Tcp,
        Transport::Udp,
        Transport::Icmp,
        Transport::Icmpv6,
        Transport::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Transport::Tcp => "TCP",
            Transport::Udp => "UDP",
            Transport::Icmp => "ICMP",
            Transport::Icmpv6 => "ICMPV6",
            Transport::Other => "OTHER",
        }
    }

    fn from_ip_protocol(proto: u8) -> Transport {
        match proto {
            6 => Transport::Tcp,
            17 => Transport::Udp,
            1 => Transport::Icmp,
            58 => Transport::Icmpv6,
            _ => Transport::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AppProtocol {
    Dns,
    Http,
    Https,
    Ntp,
    Mqtt,
    Mdns,
    Dhcp,
    Ssh,
    Other,
}

impl AppProtocol {
    pub const ALL: [AppProtocol; 9] = [
        AppProtocol::Dns,
        AppProtocol::Http,
        AppProtocol::Https,
        AppProtocol::Ntp,
        AppProtocol::Mqtt,
        AppProtocol::Mdns,
        AppProtocol::Dhcp,
        AppProtocol::Ssh,
        AppProtocol::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AppProtocol::Dns => "DNS",
            AppProtocol::Http => "HTTP",
            AppProtocol::Https => "HTTPS",
            AppProtocol::Ntp => "NTP",
            AppProtocol::Mqtt => "MQTT",
            AppProtocol::Mdns => "MDNS",
            AppProtocol::Dhcp => "DHCP",
            AppProtocol::Ssh => "SSH",
            AppProtocol::Other => "OTHER",
        }
    }

    fn from_port(port: u16) -> Option<AppProtocol> {
        Some(match port {
            53 => AppProtocol::Dns,
            80 => AppProtocol::Http,
            443 => AppProtocol::Https,
            123 => AppProtocol::Ntp,
            1883 => AppProtocol::Mqtt,
            5353 => AppProtocol::Mdns,
            67 | 68 => AppProtocol::Dhcp,
            22 => AppProtocol::Ssh,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IpVersion {
    V4,
    V6,
}

/// Where a packet sits relative to the home network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scope {
    /// Leaves the LAN.
    LocalToRemote,
    /// Enters the LAN.
    RemoteToLocal,
    /// Stays within the LAN.
    Internal,
    /// Neither endpoint is local.
    External,
    /// Multicast/broadcast destination, or no IP layer.
    Special,
}

impl Scope {
    pub const ALL: [Scope; 5] = [
        Scope::LocalToRemote,
        Scope::RemoteToLocal,
        Scope::Internal,
        Scope::External,
        Scope::Special,
    ];
}

/// Feature row describing a single captured packet.
///
/// `sequence` is zero until the store assigns one, and `scope` stays `None`
/// until the record is classified against a LAN configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub sequence: u64,
    pub timestamp: Timestamp,
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub ether_type: u16,
    pub src_ip: Option<IpAddr>,
    pub dst_ip: Option<IpAddr>,
    pub transport: Option<Transport>,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
    pub app: AppProtocol,
    /// Original on-the-wire length, which may exceed the captured bytes.
    pub length: u32,
    pub scope: Option<Scope>,
    pub malformed: bool,
}

impl PacketRecord {
    fn blank(timestamp: Timestamp, length: u32) -> Self {
        PacketRecord {
            sequence: 0,
            timestamp,
            src_mac: MacAddr::default(),
            dst_mac: MacAddr::default(),
            ether_type: 0,
            src_ip: None,
            dst_ip: None,
            transport: None,
            src_port: None,
            dst_port: None,
            app: AppProtocol::Other,
            length,
            scope: None,
            malformed: false,
        }
    }

    pub fn ip_version(&self) -> Option<IpVersion> {
        match self.src_ip? {
            IpAddr::V4(_) => Some(IpVersion::V4),
            IpAddr::V6(_) => Some(IpVersion::V6),
        }
    }

    /// Sort key used everywhere records are ordered.
    pub fn order_key(&self) -> (Timestamp, u64) {
        (self.timestamp, self.sequence)
    }
}

/// Application protocol from the well-known port table.
///
/// The destination port is checked first, so it wins when both ports map
/// to different protocols. Only TCP and UDP carry ports.
pub fn guess_app_protocol(transport: Transport, src_port: Option<u16>, dst_port: Option<u16>) -> AppProtocol {
    if !matches!(transport, Transport::Tcp | Transport::Udp) {
        return AppProtocol::Other;
    }
    dst_port
        .and_then(AppProtocol::from_port)
        .or_else(|| src_port.and_then(AppProtocol::from_port))
        .unwrap_or(AppProtocol::Other)
}

fn be16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

/// Decode one Ethernet frame into a feature row. Never fails.
pub fn decode_frame(frame: &RawFrame, meta: &CaptureMeta) -> PacketRecord {
    let mut rec = PacketRecord::blank(frame.timestamp, frame.original_len);
    if meta.link_type != LINKTYPE_ETHERNET {
        rec.malformed = true;
        return rec;
    }
    let data = &frame.data;
    if data.len() < ETH_HEADER_LEN {
        rec.malformed = true;
        return rec;
    }
    rec.dst_mac = MacAddr::from_slice(&data[0..6]).expect("6-byte slice");
    rec.src_mac = MacAddr::from_slice(&data[6..12]).expect("6-byte slice");
    let mut ether_type = be16(&data[12..14]);
    let mut offset = ETH_HEADER_LEN;

    if ether_type == ETHERTYPE_VLAN {
        if data.len() < ETH_HEADER_LEN + VLAN_TAG_LEN {
            rec.ether_type = ether_type;
            rec.malformed = true;
            return rec;
        }
        ether_type = be16(&data[16..18]);
        offset += VLAN_TAG_LEN;
    }
    rec.ether_type = ether_type;
    // Only a single 802.1Q tag is unwrapped; stacked tags are not decoded.
    if ether_type == ETHERTYPE_VLAN || ether_type == ETHERTYPE_QINQ {
        rec.malformed = true;
        return rec;
    }

    let payload = &data[offset..];
    match ether_type {
        ETHERTYPE_IPV4 => decode_ipv4(payload, &mut rec),
        ETHERTYPE_IPV6 => decode_ipv6(payload, &mut rec),
        _ => {}
    }
    if let Some(t) = rec.transport {
        rec.app = guess_app_protocol(t, rec.src_port, rec.dst_port);
    }
    rec
}

fn decode_ipv4(p: &[u8], rec: &mut PacketRecord) {
    if p.len() < 20 || p[0] >> 4 != 4 {
        rec.malformed = true;
        return;
    }
    let header_len = usize::from(p[0] & 0x0f) * 4;
    let total_len = usize::from(be16(&p[2..4]));
    if header_len < 20 || p.len() < header_len || total_len < header_len {
        rec.malformed = true;
        return;
    }
    let src: [u8; 4] = p[12..16].try_into().expect("4-byte slice");
    let dst: [u8; 4] = p[16..20].try_into().expect("4-byte slice");
    rec.src_ip = Some(IpAddr::V4(Ipv4Addr::from(src)));
    rec.dst_ip = Some(IpAddr::V4(Ipv4Addr::from(dst)));

    let fragment_offset = be16(&p[6..8]) & 0x1fff;
    if fragment_offset != 0 {
        // Later fragments carry no transport header.
        rec.transport = Some(Transport::Other);
        return;
    }
    let end = total_len.min(p.len());
    decode_transport(p[9], &p[header_len..end], rec);
}

fn decode_ipv6(p: &[u8], rec: &mut PacketRecord) {
    if p.len() < 40 || p[0] >> 4 != 6 {
        rec.malformed = true;
        return;
    }
    let src: [u8; 16] = p[8..24].try_into().expect("16-byte slice");
    let dst: [u8; 16] = p[24..40].try_into().expect("16-byte slice");
    rec.src_ip = Some(IpAddr::V6(Ipv6Addr::from(src)));
    rec.dst_ip = Some(IpAddr::V6(Ipv6Addr::from(dst)));

    let payload_len = usize::from(be16(&p[4..6]));
    // A zero payload length means a jumbogram; fall back to what was captured.
    let end = if payload_len == 0 {
        p.len()
    } else {
        (40 + payload_len).min(p.len())
    };
    let mut next = p[6];
    let mut offset = 40;
    for _ in 0..MAX_IPV6_EXTENSIONS {
        let ext_len = match next {
            // hop-by-hop, routing, destination options
            0 | 43 | 60 => {
                if offset + 2 > end {
                    rec.malformed = true;
                    return;
                }
                (usize::from(p[offset + 1]) + 1) * 8
            }
            // authentication header
            51 => {
                if offset + 2 > end {
                    rec.malformed = true;
                    return;
                }
                (usize::from(p[offset + 1]) + 2) * 4
            }
            // fragment
            44 => {
                if offset + 8 > end {
                    rec.malformed = true;
                    return;
                }
                if be16(&p[offset + 2..offset + 4]) >> 3 != 0 {
                    rec.transport = Some(Transport::Other);
                    return;
                }
                8
            }
            // no next header
            59 => {
                rec.transport = Some(Transport::Other);
                return;
            }
            _ => break,
        };
        if offset + ext_len > end {
            rec.malformed = true;
            return;
        }
        next = p[offset];
        offset += ext_len;
    }
    decode_transport(next, &p[offset..end], rec);
}

fn decode_transport(proto: u8, l4: &[u8], rec: &mut PacketRecord) {
    let transport = Transport::from_ip_protocol(proto);
    rec.transport = Some(transport);
    let min_len = match transport {
        Transport::Tcp => 20,
        Transport::Udp => 8,
        _ => return,
    };
    if l4.len() < min_len || (transport == Transport::Tcp && l4[12] >> 4 < 5) {
        rec.malformed = true;
        return;
    }
    rec.src_port = Some(be16(&l4[0..2]));
    rec.dst_port = Some(be16(&l4[2..4]));
}
