//! Backend model for home-network traffic visualization.
//!
//! The pipeline is: classic pcap bytes ([`pcap`]) are decoded into per-packet
//! feature rows ([`packet`]), endpoints are resolved into cached device
//! identities ([`identity`]), rows are persisted and queried ([`store`]), and
//! query results are turned into a clustered 3D scene ([`scene`]) that is
//! streamed to clients as NDJSON frames ([`wire`]) at a replay pace
//! ([`pace`]). [`ingest`] ties the first half together for a capture file.

pub mod identity;
pub mod ingest;
pub mod mac;
pub mod pace;
pub mod packet;
pub mod pcap;
pub mod scene;
pub mod store;
pub mod time;
pub mod wire;

pub use identity::{
    classify_scope, Continent, DeviceIdentity, DeviceKey, GeoDb, GeoLocation, IdentityCache, IdentityResolver, KeyKind,
    LanConfig, Location, OuiRegistry, Role,
};
pub use ingest::{ingest_capture, IngestError, IngestReport};
pub use mac::MacAddr;
pub use packet::{decode_frame, guess_app_protocol, AppProtocol, IpVersion, PacketRecord, Scope, Transport};
pub use pcap::{parse_capture, CaptureMeta, ParsedCapture, PcapError, PcapReader, RawFrame};
pub use scene::{build_scene, Connection, PacketEvent, Scene, SceneBuilder, SceneNode};
pub use store::{AppendReceipt, NodeAnalytics, StoreConfig, StoreError, TrafficQuery, TrafficStore};
pub use time::Timestamp;
pub use wire::StreamFrame;
