//! On-disk segments.
//!
//! Each segment is a pair of files in the data directory:
//!
//! * `seg-NNNNNNNN.log`: concatenated records, each a little-endian `u32`
//!   body length followed by the body (layout in [`encode_record`]).
//! * `seg-NNNNNNNN.idx`: JSON sidecar with the committed byte length,
//!   record count, sequence range and min/max timestamp of the log.
//!
//! A batch is committed by appending it to the log, syncing, and then
//! atomically replacing the sidecar. Bytes past `committed_len` belong to an
//! interrupted batch and are discarded on open.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::mac::MacAddr;
use crate::packet::{AppProtocol, PacketRecord, Scope, Transport};
use crate::time::Timestamp;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct SegmentIndex {
    pub format: u32,
    pub segment: u64,
    pub committed_len: u64,
    pub count: u64,
    pub first_seq: Option<u64>,
    pub last_seq: Option<u64>,
    pub min_ts: Option<Timestamp>,
    pub max_ts: Option<Timestamp>,
}

impl SegmentIndex {
    fn new(segment: u64) -> Self {
        SegmentIndex {
            format: FORMAT_VERSION,
            segment,
            ..Default::default()
        }
    }

    fn absorb(&mut self, records: &[PacketRecord], bytes: u64) {
        for r in records {
            self.min_ts = Some(self.min_ts.map_or(r.timestamp, |m| m.min(r.timestamp)));
            self.max_ts = Some(self.max_ts.map_or(r.timestamp, |m| m.max(r.timestamp)));
            self.first_seq = Some(self.first_seq.map_or(r.sequence, |s| s.min(r.sequence)));
            self.last_seq = Some(self.last_seq.map_or(r.sequence, |s| s.max(r.sequence)));
        }
        self.count += records.len() as u64;
        self.committed_len += bytes;
    }
}

#[derive(Debug, thiserror::Error)]
pub(crate) enum CodecError {
    #[error("record at byte {offset}: {reason}")]
    Corrupt { offset: usize, reason: &'static str },
}

fn transport_code(t: Option<Transport>) -> u8 {
    match t {
        None => 0,
        Some(Transport::Tcp) => 1,
        Some(Transport::Udp) => 2,
        Some(Transport::Icmp) => 3,
        Some(Transport::Icmpv6) => 4,
        Some(Transport::Other) => 5,
    }
}

fn transport_from(code: u8) -> Option<Option<Transport>> {
    Some(match code {
        0 => None,
        1 => Some(Transport::Tcp),
        2 => Some(Transport::Udp),
        3 => Some(Transport::Icmp),
        4 => Some(Transport::Icmpv6),
        5 => Some(Transport::Other),
        _ => return None,
    })
}

fn scope_code(s: Option<Scope>) -> u8 {
    match s {
        None => 0,
        Some(Scope::LocalToRemote) => 1,
        Some(Scope::RemoteToLocal) => 2,
        Some(Scope::Internal) => 3,
        Some(Scope::External) => 4,
        Some(Scope::Special) => 5,
    }
}

fn scope_from(code: u8) -> Option<Option<Scope>> {
    Some(match code {
        0 => None,
        c @ 1..=5 => Some(Scope::ALL[usize::from(c - 1)]),
        _ => return None,
    })
}

fn app_from(code: u8) -> Option<AppProtocol> {
    AppProtocol::ALL.get(usize::from(code)).copied()
}

const FLAG_MALFORMED: u8 = 0x01;
const FLAG_SRC_PORT: u8 = 0x02;
const FLAG_DST_PORT: u8 = 0x04;

/// Append one length-prefixed record to `out`.
///
/// Body layout (little-endian): seq u64, ts-nanos u64, src mac [6],
/// dst mac [6], ether type u16, flags u8, ip version u8 (0/4/6), src and
/// dst address (4 or 16 bytes each, absent for version 0), transport u8,
/// src port u16, dst port u16, app u8, length u32, scope u8.
pub(crate) fn encode_record(rec: &PacketRecord, out: &mut Vec<u8>) {
    let start = out.len();
    out.extend_from_slice(&[0; 4]);
    out.extend_from_slice(&rec.sequence.to_le_bytes());
    out.extend_from_slice(&rec.timestamp.as_nanos().to_le_bytes());
    out.extend_from_slice(&rec.src_mac.octets());
    out.extend_from_slice(&rec.dst_mac.octets());
    out.extend_from_slice(&rec.ether_type.to_le_bytes());
    let mut flags = 0;
    if rec.malformed {
        flags |= FLAG_MALFORMED;
    }
    if rec.src_port.is_some() {
        flags |= FLAG_SRC_PORT;
    }
    if rec.dst_port.is_some() {
        flags |= FLAG_DST_PORT;
    }
    out.push(flags);
    encode_ip(rec.src_ip, out);
    encode_ip(rec.dst_ip, out);
    out.push(transport_code(rec.transport));
    out.extend_from_slice(&rec.src_port.unwrap_or(0).to_le_bytes());
    out.extend_from_slice(&rec.dst_port.unwrap_or(0).to_le_bytes());
    out.push(rec.app as u8);
    out.extend_from_slice(&rec.length.to_le_bytes());
    out.push(scope_code(rec.scope));
    let body_len = (out.len() - start - 4) as u32;
    out[start..start + 4].copy_from_slice(&body_len.to_le_bytes());
}

fn encode_ip(ip: Option<IpAddr>, out: &mut Vec<u8>) {
    match ip {
        None => out.push(0),
        Some(IpAddr::V4(v4)) => {
            out.push(4);
            out.extend_from_slice(&v4.octets());
        }
        Some(IpAddr::V6(v6)) => {
            out.push(6);
            out.extend_from_slice(&v6.octets());
        }
    }
}

fn decode_ip(c: &mut Cursor<'_>) -> Option<Option<IpAddr>> {
    Some(match c.u8()? {
        0 => None,
        4 => Some(IpAddr::V4(Ipv4Addr::from(<[u8; 4]>::try_from(c.take(4)?).ok()?))),
        6 => Some(IpAddr::V6(Ipv6Addr::from(<[u8; 16]>::try_from(c.take(16)?).ok()?))),
        _ => return None,
    })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }
    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }
    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

fn decode_body(body: &[u8]) -> Option<PacketRecord> {
    let mut c = Cursor { buf: body, pos: 0 };
    let sequence = c.u64()?;
    let timestamp = Timestamp::from_nanos(c.u64()?);
    let src_mac = MacAddr::from_slice(c.take(6)?)?;
    let dst_mac = MacAddr::from_slice(c.take(6)?)?;
    let ether_type = c.u16()?;
    let flags = c.u8()?;
    let src_ip = decode_ip(&mut c)?;
    let dst_ip = decode_ip(&mut c)?;
    let transport = transport_from(c.u8()?)?;
    let src_port = c.u16()?;
    let dst_port = c.u16()?;
    let app = app_from(c.u8()?)?;
    let length = c.u32()?;
    let scope = scope_from(c.u8()?)?;
    if c.pos != body.len() {
        return None;
    }
    Some(PacketRecord {
        sequence,
        timestamp,
        src_mac,
        dst_mac,
        ether_type,
        src_ip,
        dst_ip,
        transport,
        src_port: (flags & FLAG_SRC_PORT != 0).then_some(src_port),
        dst_port: (flags & FLAG_DST_PORT != 0).then_some(dst_port),
        app,
        length,
        scope,
        malformed: flags & FLAG_MALFORMED != 0,
    })
}

/// Decode every complete record in `buf`.
pub(crate) fn decode_records(buf: &[u8]) -> Result<Vec<PacketRecord>, CodecError> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < buf.len() {
        let corrupt = |reason| CodecError::Corrupt { offset: pos, reason };
        let len_bytes: [u8; 4] = buf
            .get(pos..pos + 4)
            .ok_or_else(|| corrupt("truncated length prefix"))?
            .try_into()
            .expect("4 bytes");
        let len = u32::from_le_bytes(len_bytes) as usize;
        let body = buf
            .get(pos + 4..pos + 4 + len)
            .ok_or_else(|| corrupt("truncated body"))?;
        out.push(decode_body(body).ok_or_else(|| corrupt("invalid body"))?);
        pos += 4 + len;
    }
    Ok(out)
}

pub(crate) fn log_path(dir: &Path, id: u64) -> PathBuf {
    dir.join(format!("seg-{id:08}.log"))
}

pub(crate) fn idx_path(dir: &Path, id: u64) -> PathBuf {
    dir.join(format!("seg-{id:08}.idx"))
}

/// Segment ids present in `dir`, ascending.
pub(crate) fn list_segments(dir: &Path) -> io::Result<Vec<u64>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(id) = name
            .strip_prefix("seg-")
            .and_then(|s| s.strip_suffix(".log"))
            .and_then(|s| s.parse().ok())
        {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

/// The writable tail segment.
pub(crate) struct SegmentFile {
    dir: PathBuf,
    log: File,
    pub index: SegmentIndex,
}

impl SegmentFile {
    pub fn create(dir: &Path, id: u64) -> io::Result<Self> {
        let log = OpenOptions::new()
            .create(true)
            .truncate(true)
            .read(true)
            .write(true)
            .open(log_path(dir, id))?;
        let seg = SegmentFile {
            dir: dir.to_owned(),
            log,
            index: SegmentIndex::new(id),
        };
        seg.write_index(&seg.index)?;
        Ok(seg)
    }

    /// Open an existing segment, dropping any uncommitted tail.
    pub fn open(dir: &Path, id: u64) -> Result<(Self, Vec<PacketRecord>), super::StoreError> {
        let index = match fs::read(idx_path(dir, id)) {
            Ok(bytes) => serde_json::from_slice::<SegmentIndex>(&bytes)
                .map_err(|e| super::StoreError::Corrupt(format!("segment {id} index: {e}")))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => SegmentIndex::new(id),
            Err(e) => return Err(e.into()),
        };
        if index.format != FORMAT_VERSION || index.segment != id {
            return Err(super::StoreError::Corrupt(format!(
                "segment {id}: unexpected index header"
            )));
        }
        let mut log = OpenOptions::new().read(true).write(true).open(log_path(dir, id))?;
        let mut buf = Vec::new();
        (&mut log).take(index.committed_len).read_to_end(&mut buf)?;
        if (buf.len() as u64) < index.committed_len {
            return Err(super::StoreError::Corrupt(format!(
                "segment {id}: log shorter than committed length {}",
                index.committed_len
            )));
        }
        if log.metadata()?.len() > index.committed_len {
            log.set_len(index.committed_len)?;
            log.sync_all()?;
        }
        let records = decode_records(&buf).map_err(|e| super::StoreError::Corrupt(format!("segment {id}: {e}")))?;
        if records.len() as u64 != index.count {
            return Err(super::StoreError::Corrupt(format!(
                "segment {id}: index counts {} records, log holds {}",
                index.count,
                records.len()
            )));
        }
        Ok((
            SegmentFile {
                dir: dir.to_owned(),
                log,
                index,
            },
            records,
        ))
    }

    pub fn id(&self) -> u64 {
        self.index.segment
    }

    /// Append an encoded batch and commit it. On failure the log is cut back
    /// to the previous commit point and the index is left untouched.
    pub fn append(&mut self, encoded: &[u8], records: &[PacketRecord]) -> io::Result<()> {
        let committed = self.index.committed_len;
        let result = (|| {
            use std::io::{Seek, SeekFrom};
            self.log.seek(SeekFrom::Start(committed))?;
            self.log.write_all(encoded)?;
            self.log.sync_data()?;
            let mut next = self.index.clone();
            next.absorb(records, encoded.len() as u64);
            self.write_index(&next)?;
            self.index = next;
            Ok(())
        })();
        if result.is_err() {
            let _ = self.log.set_len(committed);
        }
        result
    }

    fn write_index(&self, index: &SegmentIndex) -> io::Result<()> {
        let id = index.segment;
        let tmp = self.dir.join(format!("seg-{id:08}.idx.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&serde_json::to_vec(index).map_err(io::Error::other)?)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, idx_path(&self.dir, id))
    }
}
