//! Brute-force oracles and generators shared by the integration tests.
//!
//! The oracles never call into the query engine, the scene builder, or
//! `LanConfig::endpoint_key`; they re-derive answers from raw record fields
//! so they can catch mistakes in those paths.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::path::PathBuf;

use homeviz_core::identity::{Continent, Role};
use homeviz_core::packet::{AppProtocol, PacketRecord, Scope, Transport};
use homeviz_core::scene::{layout, ClusterId, Connection, PacketEvent, Position, SceneNode};
use homeviz_core::wire::{decode_frame, encode_frame, ErrorCode, StreamFrame, PROTOCOL_VERSION};
use homeviz_core::{
    build_scene, DeviceIdentity, DeviceKey, IdentityCache, IdentityResolver, LanConfig, MacAddr, Timestamp,
    TrafficQuery,
};
use ipnet::IpNet;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

/// Prefixes considered local by the tests: the defaults plus the fixture's
/// global IPv6 subnet.
pub const TEST_LAN: [&str; 6] = [
    "10.0.0.0/8",
    "172.16.0.0/12",
    "192.168.0.0/16",
    "fe80::/10",
    "fc00::/7",
    "2001:db8:1::/48",
];

pub fn test_lan() -> LanConfig {
    LanConfig::from_cidrs(&TEST_LAN, None).unwrap()
}

pub fn test_prefixes() -> Vec<IpNet> {
    TEST_LAN.iter().map(|s| s.parse().unwrap()).collect()
}

/// One row of a reference analyzer export.
#[derive(Debug, Clone, serde::Deserialize)]
pub struct RefRow {
    pub ts_ns: u64,
    pub caplen: u32,
    pub orig_len: u32,
    pub src_mac: String,
    pub dst_mac: String,
    pub ether_type: String,
    pub src_ip: String,
    pub dst_ip: String,
    pub transport: String,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
}

pub fn read_reference(name: &str) -> Vec<RefRow> {
    let mut rd = csv::Reader::from_path(fixture(name)).unwrap();
    rd.deserialize().map(|r| r.unwrap()).collect()
}

/// Field-by-field comparison of a decoded record against the reference row.
/// Returns a description of the first mismatch.
pub fn compare_with_reference(rec: &PacketRecord, row: &RefRow) -> Result<(), String> {
    let opt_ip = |s: &str| {
        if s.is_empty() {
            None
        } else {
            Some(s.parse::<IpAddr>().unwrap())
        }
    };
    let checks: [(&str, String, String); 8] = [
        ("timestamp", rec.timestamp.as_nanos().to_string(), row.ts_ns.to_string()),
        ("length", rec.length.to_string(), row.orig_len.to_string()),
        ("src_mac", rec.src_mac.to_string(), row.src_mac.clone()),
        ("dst_mac", rec.dst_mac.to_string(), row.dst_mac.clone()),
        (
            "src_ip",
            format!("{:?}", rec.src_ip),
            format!("{:?}", opt_ip(&row.src_ip)),
        ),
        (
            "dst_ip",
            format!("{:?}", rec.dst_ip),
            format!("{:?}", opt_ip(&row.dst_ip)),
        ),
        (
            "transport",
            rec.transport.map_or(String::new(), |t| t.name().to_owned()),
            row.transport.clone(),
        ),
        (
            "ports",
            format!("{:?}/{:?}", rec.src_port, rec.dst_port),
            format!("{:?}/{:?}", row.src_port, row.dst_port),
        ),
    ];
    for (field, got, want) in checks {
        if got != want {
            return Err(format!("{field}: decoded {got}, reference {want}"));
        }
    }
    // The reference reports the outer ethertype of tagged frames.
    if row.ether_type != "0x8100" && format!("0x{:04x}", rec.ether_type) != row.ether_type {
        return Err(format!(
            "ether_type: decoded 0x{:04x}, reference {}",
            rec.ether_type, row.ether_type
        ));
    }
    Ok(())
}

/// Node key of one endpoint, derived from first principles: an address
/// outside every local prefix (and not 0.0.0.0 / ::) identifies a remote
/// host; anything else is the MAC.
pub fn oracle_key(prefixes: &[IpNet], mac: MacAddr, ip: Option<IpAddr>) -> DeviceKey {
    match ip {
        Some(ip) if !ip.is_unspecified() && !prefixes.iter().any(|p| p.contains(&ip)) => DeviceKey::Ip(ip),
        _ => DeviceKey::Mac(mac),
    }
}

pub fn oracle_keys(prefixes: &[IpNet], r: &PacketRecord) -> (DeviceKey, DeviceKey) {
    (
        oracle_key(prefixes, r.src_mac, r.src_ip),
        oracle_key(prefixes, r.dst_mac, r.dst_ip),
    )
}

/// Filter every record independently, then sort and cut.
pub fn oracle_query(records: &[PacketRecord], prefixes: &[IpNet], q: &TrafficQuery) -> Vec<PacketRecord> {
    let apps = q.apps.clone().filter(|s| !s.is_empty());
    let transports = q.transports.clone().filter(|s| !s.is_empty());
    let scopes = q.scopes.clone().filter(|s| !s.is_empty());
    let mut out: Vec<PacketRecord> = records
        .iter()
        .filter(|r| q.from.is_none_or(|f| r.timestamp >= f))
        .filter(|r| q.to.is_none_or(|t| r.timestamp < t))
        .filter(|r| {
            q.device.is_none_or(|d| {
                let (s, t) = oracle_keys(prefixes, r);
                s == d || t == d
            })
        })
        .filter(|r| {
            if apps.is_none() && transports.is_none() {
                return true;
            }
            let by_app = apps.as_ref().is_some_and(|a| a.contains(&r.app));
            let by_transport = match (&transports, r.transport) {
                (Some(t), Some(x)) => t.contains(&x),
                _ => false,
            };
            by_app || by_transport
        })
        .filter(|r| scopes.as_ref().is_none_or(|s| r.scope.is_some_and(|x| s.contains(&x))))
        .copied()
        .collect();
    out.sort_by_key(|r| (r.timestamp, r.sequence));
    if let Some(n) = q.limit {
        out.truncate(n as usize);
    }
    out
}

/// Distinct unordered endpoint pairs.
pub fn oracle_pairs(records: &[PacketRecord], prefixes: &[IpNet]) -> BTreeSet<(DeviceKey, DeviceKey)> {
    records
        .iter()
        .map(|r| {
            let (a, b) = oracle_keys(prefixes, r);
            (a.min(b), a.max(b))
        })
        .collect()
}

pub struct Population {
    pub locals: Vec<(MacAddr, IpAddr)>,
    pub remotes: Vec<IpAddr>,
    pub gateway: MacAddr,
}

impl Population {
    pub fn new() -> Self {
        let locals = (1..=6u8)
            .map(|i| {
                let mac = MacAddr([0x18, 0xb4, 0x30, 0x00, 0x00, i]);
                let ip = if i % 3 == 0 {
                    IpAddr::V6(Ipv6Addr::new(0x2001, 0xdb8, 1, 0, 0, 0, 0, u16::from(i)))
                } else {
                    IpAddr::V4(Ipv4Addr::new(192, 168, 1, 10 + i))
                };
                (mac, ip)
            })
            .collect();
        let remotes = [
            "8.8.8.8",
            "93.184.216.34",
            "151.101.1.69",
            "1.1.1.1",
            "203.0.113.7",
            "2606:4700::1111",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
        Population {
            locals,
            remotes,
            gateway: "3c:37:86:11:22:33".parse().unwrap(),
        }
    }

    /// Every key a generated record can produce, plus one that never occurs.
    pub fn keys(&self) -> Vec<DeviceKey> {
        let mut keys: Vec<DeviceKey> = self.locals.iter().map(|(m, _)| DeviceKey::Mac(*m)).collect();
        keys.extend(self.remotes.iter().map(|ip| DeviceKey::Ip(*ip)));
        keys.push(DeviceKey::Mac(MacAddr::BROADCAST));
        keys.push(DeviceKey::Ip("224.0.0.251".parse().unwrap()));
        keys.push(DeviceKey::Ip("198.51.100.99".parse().unwrap()));
        keys
    }
}

fn random_app(rng: &mut impl Rng) -> AppProtocol {
    *AppProtocol::ALL.choose(rng).unwrap()
}

/// A random record among `pop`, stamped within `[base, base + span_ns)`.
/// Scopes are drawn at random so the scope filter is exercised on its own.
pub fn random_record(rng: &mut impl Rng, pop: &Population, base: u64, span_ns: u64) -> PacketRecord {
    let (mac, ip) = *pop.locals.choose(rng).unwrap();
    let remote = *pop.remotes.choose(rng).unwrap();
    let (other_mac, other_ip) = *pop.locals.choose(rng).unwrap();
    // Coarse timestamps so many records tie and the sequence decides order.
    let timestamp = Timestamp::from_nanos(base + rng.gen_range(0..span_ns.max(1)) / 1_000_000 * 1_000_000);
    let shape = rng.gen_range(0..5);
    let (src_mac, dst_mac, src_ip, dst_ip) = match shape {
        0 => (mac, pop.gateway, Some(ip), Some(remote)),
        1 => (pop.gateway, mac, Some(remote), Some(ip)),
        2 => (mac, other_mac, Some(ip), Some(other_ip)),
        3 => (mac, MacAddr::BROADCAST, None, None),
        _ => (
            mac,
            "01:00:5e:00:00:fb".parse().unwrap(),
            Some(ip),
            Some("224.0.0.251".parse().unwrap()),
        ),
    };
    let transport = if src_ip.is_some() {
        Some(
            *[Transport::Tcp, Transport::Udp, Transport::Icmp, Transport::Other]
                .choose(rng)
                .unwrap(),
        )
    } else {
        None
    };
    let ports = matches!(transport, Some(Transport::Tcp | Transport::Udp));
    PacketRecord {
        sequence: 0,
        timestamp,
        src_mac,
        dst_mac,
        ether_type: if src_ip.is_some() { 0x0800 } else { 0x0806 },
        src_ip,
        dst_ip,
        transport,
        src_port: ports.then(|| rng.gen_range(1..=65535)),
        dst_port: ports.then(|| rng.gen_range(1..=65535)),
        app: if ports { random_app(rng) } else { AppProtocol::Other },
        length: rng.gen_range(42..1514),
        scope: Some(*Scope::ALL.choose(rng).unwrap()),
        malformed: false,
    }
}

fn random_subset<T: Copy + Ord>(rng: &mut impl Rng, all: &[T]) -> Option<BTreeSet<T>> {
    match rng.gen_range(0..4) {
        0 | 1 => None,
        2 => Some(BTreeSet::new()),
        _ => Some(all.iter().copied().filter(|_| rng.gen_bool(0.4)).collect()),
    }
}

/// A valid random query over records stamped in `[base, base + span_ns)`.
pub fn random_query(rng: &mut impl Rng, pop: &Population, base: u64, span_ns: u64) -> TrafficQuery {
    let point = |rng: &mut _| base.saturating_sub(span_ns / 10) + Rng::gen_range(rng, 0..span_ns + span_ns / 5 + 1);
    let (from, to) = match rng.gen_range(0..4) {
        0 => (None, None),
        1 => (Some(point(rng)), None),
        2 => (None, Some(point(rng))),
        _ => {
            let a = point(rng);
            let b = point(rng);
            if a == b {
                (Some(a), Some(a + 1))
            } else {
                (Some(a.min(b)), Some(a.max(b)))
            }
        }
    };
    TrafficQuery {
        from: from.map(Timestamp::from_nanos),
        to: to.map(Timestamp::from_nanos),
        device: if rng.gen_bool(0.5) {
            pop.keys().choose(rng).copied()
        } else {
            None
        },
        apps: random_subset(rng, &AppProtocol::ALL),
        transports: random_subset(rng, &Transport::ALL),
        scopes: random_subset(rng, &Scope::ALL),
        limit: if rng.gen_bool(0.3) {
            Some(rng.gen_range(1..200))
        } else {
            None
        },
        time_scale: 0.0,
    }
}

/// Number the records the way the store does: sequentially from `first`.
pub fn number_from(records: &mut [PacketRecord], first: u64) {
    for (i, r) in records.iter_mut().enumerate() {
        r.sequence = first + i as u64;
    }
}

/// Histogram oracle for a device.
pub fn oracle_histogram(records: &[PacketRecord], prefixes: &[IpNet], key: DeviceKey) -> BTreeMap<AppProtocol, u64> {
    let mut h = BTreeMap::new();
    for r in records {
        let (s, d) = oracle_keys(prefixes, r);
        if s == key || d == key {
            *h.entry(r.app).or_default() += 1;
        }
    }
    h
}

/// Identities folded from `records` with the test LAN.
pub fn identities_of(records: &[PacketRecord]) -> BTreeMap<DeviceKey, DeviceIdentity> {
    let mut cache = IdentityCache::new(std::sync::Arc::new(IdentityResolver::bundled(test_lan())));
    for r in records {
        cache.upsert(r);
    }
    cache.snapshot()
}

/// Check every scene invariant for `records`; returns the connection count.
pub fn check_scene_invariants(records: &[PacketRecord]) -> Result<usize, String> {
    let lan = test_lan();
    let prefixes = test_prefixes();
    let ids = identities_of(records);
    let (scene, events) = build_scene(records, &lan, &ids);

    // Referential integrity and order preservation.
    if events.len() != records.len() {
        return Err("event count differs from record count".into());
    }
    for (e, r) in events.iter().zip(records) {
        if e.sequence != r.sequence {
            return Err("event order differs from input order".into());
        }
        if scene.node(&e.src).is_none() || scene.node(&e.dst).is_none() {
            return Err(format!("event {} references a missing node", e.sequence));
        }
        let c = scene
            .connection(e.connection)
            .ok_or("event references a missing connection")?;
        if (c.a, c.b) != (e.src.min(e.dst), e.src.max(e.dst)) {
            return Err("event connection has other endpoints".into());
        }
    }

    // One connection per pair, matching the brute-force pair set.
    let pairs = oracle_pairs(records, &prefixes);
    let seen: BTreeSet<_> = scene.connections.iter().map(|c| (c.a, c.b)).collect();
    if seen.len() != scene.connections.len() {
        return Err("duplicate connection for one pair".into());
    }
    if seen != pairs {
        return Err(format!("{} connections, oracle has {} pairs", seen.len(), pairs.len()));
    }
    for c in &scene.connections {
        let first = records
            .iter()
            .filter(|r| {
                let (s, d) = oracle_keys(&prefixes, r);
                (s.min(d), s.max(d)) == (c.a, c.b)
            })
            .map(|r| r.timestamp)
            .min();
        if first != Some(c.first_contact) {
            return Err("first contact is not the earliest packet of the pair".into());
        }
    }
    let nodes: BTreeSet<_> = records
        .iter()
        .flat_map(|r| {
            let (s, d) = oracle_keys(&prefixes, r);
            [s, d]
        })
        .collect();
    if nodes != scene.nodes.iter().map(|n| n.key).collect() {
        return Err("node set differs from distinct endpoints".into());
    }

    // Prefix monotonicity.
    let mut prev_nodes = BTreeSet::new();
    let mut prev_pairs = BTreeSet::new();
    for n in [records.len() / 3, records.len() / 2, records.len()] {
        let (s, _) = build_scene(&records[..n], &lan, &ids);
        let ns: BTreeSet<_> = s.nodes.iter().map(|x| x.key).collect();
        let ps: BTreeSet<_> = s.connections.iter().map(|x| (x.a, x.b)).collect();
        if !prev_nodes.is_subset(&ns) || !prev_pairs.is_subset(&ps) {
            return Err(format!("prefix of {n} records lost nodes or connections"));
        }
        prev_nodes = ns;
        prev_pairs = ps;
    }

    // Layout determinism and non-collision.
    let mut shuffled: Vec<_> = scene.nodes.iter().map(|n| (n.key, n.cluster)).collect();
    shuffled.reverse();
    let again = layout(shuffled.iter().map(|(k, c)| (k, *c)));
    for n in &scene.nodes {
        if again[&n.key] != n.position {
            return Err("layout depends on input order".into());
        }
    }
    for (i, a) in scene.nodes.iter().enumerate() {
        for b in &scene.nodes[i + 1..] {
            if a.position.distance(b.position) < 1e-6 {
                return Err(format!("{} and {} collide", a.key, b.key));
            }
        }
    }
    Ok(scene.connections.len())
}

/// One representative frame of every type, with the golden file it must
/// encode to.
pub fn golden_frames() -> Vec<(&'static str, StreamFrame)> {
    let nest: DeviceKey = "mac:18:b4:30:aa:bb:01".parse().unwrap();
    let google: DeviceKey = "ip:8.8.8.8".parse().unwrap();
    let t0 = Timestamp::from_nanos(1_700_000_100_000_000_000);
    let t1 = Timestamp::from_nanos(1_700_000_100_250_000_001);
    vec![
        (
            "hello.ndjson",
            StreamFrame::Hello {
                protocol_version: PROTOCOL_VERSION,
                capture_start: Some(t0),
                capture_end: Some(t1),
            },
        ),
        (
            "devices.ndjson",
            StreamFrame::Devices {
                nodes: vec![
                    SceneNode {
                        key: nest,
                        cluster: ClusterId::Home,
                        position: Position { x: 1.5, y: 0.0, z: 0.0 },
                        vendor: Some("Nest Labs Inc.".into()),
                        display_name: "Nest Labs Inc. (18:b4:30:aa:bb:01)".into(),
                        role: Role::Local,
                    },
                    SceneNode {
                        key: google,
                        cluster: ClusterId::Region(Continent::NorthAmerica),
                        position: Position {
                            x: -8.5,
                            y: 0.0,
                            z: 1.2246467991473533e-15,
                        },
                        vendor: None,
                        display_name: "8.8.8.8".into(),
                        role: Role::Remote,
                    },
                ],
            },
        ),
        (
            "connections.ndjson",
            StreamFrame::Connections {
                connections: vec![Connection {
                    id: 0,
                    a: nest,
                    b: google,
                    first_contact: t0,
                    packets: 2,
                }],
            },
        ),
        (
            "packets.ndjson",
            StreamFrame::Packets {
                events: vec![
                    PacketEvent {
                        sequence: 1,
                        timestamp: t0,
                        src: nest,
                        dst: google,
                        connection: 0,
                        app: AppProtocol::Dns,
                        transport: Some(Transport::Udp),
                        length: 42,
                    },
                    PacketEvent {
                        sequence: 2,
                        timestamp: t1,
                        src: google,
                        dst: nest,
                        connection: 0,
                        app: AppProtocol::Dns,
                        transport: Some(Transport::Udp),
                        length: 90,
                    },
                ],
            },
        ),
        (
            "progress.ndjson",
            StreamFrame::Progress {
                replay_ts: t1,
                emitted: 2,
            },
        ),
        ("end.ndjson", StreamFrame::End { events: 5 }),
        (
            "error.ndjson",
            StreamFrame::Error {
                code: ErrorCode::InvalidQuery,
                message: "limit must be at least 1".into(),
            },
        ),
    ]
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

/// Compare every golden frame's encoding against its frozen file. With
/// `HOMEVIZ_BLESS=1` the files are (re)written instead.
pub fn check_goldens() -> Result<usize, String> {
    let bless = std::env::var_os("HOMEVIZ_BLESS").is_some();
    let frames = golden_frames();
    for (name, frame) in &frames {
        let path = golden_dir().join(name);
        let bytes = encode_frame(frame);
        if bless {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &bytes).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).map_err(|e| format!("{name}: {e}"))?;
        if want != bytes {
            return Err(format!("{name}: encoded {bytes:?}, golden {want:?}"));
        }
        if decode_frame(&want).map_err(|e| e.to_string())? != *frame {
            return Err(format!("{name}: golden does not decode to the frame"));
        }
    }
    Ok(frames.len())
}

fn random_key(rng: &mut impl Rng) -> DeviceKey {
    match rng.gen_range(0..3) {
        0 => DeviceKey::Mac(MacAddr(rng.gen())),
        1 => DeviceKey::Ip(IpAddr::V4(Ipv4Addr::from(rng.gen::<u32>()))),
        _ => DeviceKey::Ip(IpAddr::V6(Ipv6Addr::from(rng.gen::<u128>()))),
    }
}

fn random_ts(rng: &mut impl Rng) -> Timestamp {
    Timestamp::from_nanos(rng.gen())
}

fn random_text(rng: &mut impl Rng) -> String {
    let pool = ['a', 'Z', '0', ' ', '"', '\\', '\n', '\t', 'é', '→', '\u{1}', '🏠'];
    (0..rng.gen_range(0..24)).map(|_| *pool.choose(rng).unwrap()).collect()
}

fn random_f64(rng: &mut impl Rng) -> f64 {
    match rng.gen_range(0..4) {
        0 => 0.0,
        1 => rng.gen_range(-20.0..20.0),
        2 => f64::from_bits(rng.gen::<u64>() & 0x7fef_ffff_ffff_ffff) * if rng.gen() { 1.0 } else { -1.0 },
        _ => (rng.gen_range(0..8) as f64 * std::f64::consts::TAU / 8.0).cos() * 10.0,
    }
}

/// A random but valid frame of any type.
pub fn random_frame(rng: &mut impl Rng) -> StreamFrame {
    let n = rng.gen_range(0..6);
    match rng.gen_range(0..7) {
        0 => StreamFrame::Hello {
            protocol_version: PROTOCOL_VERSION,
            capture_start: rng.gen::<bool>().then(|| random_ts(rng)),
            capture_end: rng.gen::<bool>().then(|| random_ts(rng)),
        },
        1 => StreamFrame::Devices {
            nodes: (0..n)
                .map(|_| SceneNode {
                    key: random_key(rng),
                    cluster: if rng.gen() {
                        ClusterId::Home
                    } else {
                        ClusterId::Region(*Continent::ALL.choose(rng).unwrap())
                    },
                    position: Position {
                        x: random_f64(rng),
                        y: random_f64(rng),
                        z: random_f64(rng),
                    },
                    vendor: rng.gen::<bool>().then(|| random_text(rng)),
                    display_name: random_text(rng),
                    role: *[Role::Local, Role::Remote, Role::Gateway, Role::Special]
                        .choose(rng)
                        .unwrap(),
                })
                .collect(),
        },
        2 => StreamFrame::Connections {
            connections: (0..n)
                .map(|_| {
                    let (a, b) = (random_key(rng), random_key(rng));
                    Connection {
                        id: rng.gen(),
                        a: a.min(b),
                        b: a.max(b),
                        first_contact: random_ts(rng),
                        packets: rng.gen(),
                    }
                })
                .collect(),
        },
        3 => StreamFrame::Packets {
            events: (0..n)
                .map(|_| PacketEvent {
                    sequence: rng.gen(),
                    timestamp: random_ts(rng),
                    src: random_key(rng),
                    dst: random_key(rng),
                    connection: rng.gen(),
                    app: *AppProtocol::ALL.choose(rng).unwrap(),
                    transport: rng.gen::<bool>().then(|| *Transport::ALL.choose(rng).unwrap()),
                    length: rng.gen(),
                })
                .collect(),
        },
        4 => StreamFrame::Progress {
            replay_ts: random_ts(rng),
            emitted: rng.gen(),
        },
        5 => StreamFrame::End { events: rng.gen() },
        _ => StreamFrame::Error {
            code: *[ErrorCode::InvalidQuery, ErrorCode::Internal].choose(rng).unwrap(),
            message: random_text(rng),
        },
    }
}

/// `decode(encode(f)) == f` for `count` random frames, each encoding a
/// single canonical line. Returns the first failure.
pub fn check_round_trips(seed: u64, count: usize) -> Result<(), String> {
    use rand::SeedableRng;
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    for i in 0..count {
        let f = random_frame(&mut rng);
        let line = encode_frame(&f);
        if !line.ends_with('\n') || line[..line.len() - 1].contains('\n') {
            return Err(format!("frame {i} is not one line"));
        }
        let back = decode_frame(&line).map_err(|e| format!("frame {i}: {e}"))?;
        if back != f {
            return Err(format!("frame {i} changed: {f:?} vs {back:?}"));
        }
        if encode_frame(&back) != line {
            return Err(format!("frame {i} re-encodes differently"));
        }
    }
    Ok(())
}
