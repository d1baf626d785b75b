//! Classic libpcap capture files.
//!
//! Layout: a 24-byte global header followed by records, each a 16-byte
//! header (`ts_sec`, `ts_frac`, `incl_len`, `orig_len`) and `incl_len` bytes
//! of link-layer data. The magic number fixes both byte order and whether
//! `ts_frac` counts micro- or nanoseconds. See
//! <https://wiki.wireshark.org/Development/LibpcapFileFormat>.
//!
//! [`PcapReader`] streams frames from any `Read`; [`parse_capture`] is the
//! in-memory convenience that keeps the parsed prefix of a damaged file.

use std::io::{self, Read};

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

pub const LINKTYPE_ETHERNET: u32 = 1;

const MAGIC_MICRO: u32 = 0xa1b2_c3d4;
const MAGIC_NANO: u32 = 0xa1b2_3c4d;
const MAGIC_PCAPNG: u32 = 0x0a0d_0d0a;
const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endianness {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TsResolution {
    Micro,
    Nano,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub endianness: Endianness,
    pub resolution: TsResolution,
    pub version_major: u16,
    pub version_minor: u16,
    pub link_type: u32,
    pub snap_len: u32,
}

/// One captured link-layer frame. Timestamps are normalized to nanoseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub timestamp: Timestamp,
    pub captured_len: u32,
    pub original_len: u32,
    pub data: Vec<u8>,
}

#[derive(Debug, thiserror::Error)]
pub enum PcapError {
    #[error("malformed capture header: {0}")]
    MalformedHeader(String),
    #[error("unsupported capture format: {0}")]
    UnsupportedFormat(&'static str),
    #[error("unsupported link type {0} (only Ethernet is accepted)")]
    UnsupportedLinkType(u32),
    #[error("frame {index} truncated at byte offset {offset}")]
    TruncatedFrame { index: usize, offset: u64 },
    #[error("frame {index} has an invalid record header: {reason}")]
    InvalidFrameHeader { index: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl PcapError {
    /// Errors after which the already-read frames remain trustworthy.
    pub fn is_frame_level(&self) -> bool {
        matches!(
            self,
            PcapError::TruncatedFrame { .. } | PcapError::InvalidFrameHeader { .. }
        )
    }
}

fn read_u16(bytes: &[u8], endianness: Endianness) -> u16 {
    let b = [bytes[0], bytes[1]];
    match endianness {
        Endianness::Little => u16::from_le_bytes(b),
        Endianness::Big => u16::from_be_bytes(b),
    }
}

fn read_u32(bytes: &[u8], endianness: Endianness) -> u32 {
    let b = [bytes[0], bytes[1], bytes[2], bytes[3]];
    match endianness {
        Endianness::Little => u32::from_le_bytes(b),
        Endianness::Big => u32::from_be_bytes(b),
    }
}

/// Decode and validate the 24-byte global header.
pub fn parse_header(header: &[u8]) -> Result<CaptureMeta, PcapError> {
    if header.len() < GLOBAL_HEADER_LEN {
        return Err(PcapError::MalformedHeader(format!(
            "expected {GLOBAL_HEADER_LEN} header bytes, found {}",
            header.len()
        )));
    }
    let le = u32::from_le_bytes([header[0], header[1], header[2], header[3]]);
    let (endianness, resolution) = match le {
        MAGIC_MICRO => (Endianness::Little, TsResolution::Micro),
        MAGIC_NANO => (Endianness::Little, TsResolution::Nano),
        m if m.swap_bytes() == MAGIC_MICRO => (Endianness::Big, TsResolution::Micro),
        m if m.swap_bytes() == MAGIC_NANO => (Endianness::Big, TsResolution::Nano),
        MAGIC_PCAPNG => return Err(PcapError::UnsupportedFormat("pcapng")),
        m => return Err(PcapError::MalformedHeader(format!("unknown magic {m:#010x}"))),
    };
    let meta = CaptureMeta {
        endianness,
        resolution,
        version_major: read_u16(&header[4..], endianness),
        version_minor: read_u16(&header[6..], endianness),
        // thiszone and sigfigs (bytes 8..16) are always zero in practice and ignored.
        snap_len: read_u32(&header[16..], endianness),
        link_type: read_u32(&header[20..], endianness),
    };
    if meta.snap_len == 0 {
        return Err(PcapError::MalformedHeader("snap length is zero".into()));
    }
    if meta.link_type != LINKTYPE_ETHERNET {
        return Err(PcapError::UnsupportedLinkType(meta.link_type));
    }
    Ok(meta)
}

/// Streaming frame reader over a classic pcap byte stream.
///
/// After the first error the iterator is fused and yields `None`.
pub struct PcapReader<R> {
    inner: R,
    meta: CaptureMeta,
    offset: u64,
    index: usize,
    done: bool,
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut header = [0u8; GLOBAL_HEADER_LEN];
        let n = read_full(&mut inner, &mut header)?;
        let meta = parse_header(&header[..n])?;
        Ok(PcapReader {
            inner,
            meta,
            offset: GLOBAL_HEADER_LEN as u64,
            index: 0,
            done: false,
        })
    }

    pub fn meta(&self) -> &CaptureMeta {
        &self.meta
    }

    fn next_frame(&mut self) -> Result<Option<RawFrame>, PcapError> {
        let endianness = self.meta.endianness;
        let mut hdr = [0u8; RECORD_HEADER_LEN];
        let n = read_full(&mut self.inner, &mut hdr)?;
        if n == 0 {
            return Ok(None);
        }
        if n < RECORD_HEADER_LEN {
            return Err(PcapError::TruncatedFrame {
                index: self.index,
                offset: self.offset,
            });
        }
        let ts_sec = read_u32(&hdr[0..], endianness);
        let ts_frac = read_u32(&hdr[4..], endianness);
        let incl_len = read_u32(&hdr[8..], endianness);
        let orig_len = read_u32(&hdr[12..], endianness);
        if incl_len > self.meta.snap_len {
            return Err(PcapError::InvalidFrameHeader {
                index: self.index,
                reason: format!("captured length {incl_len} exceeds snap length {}", self.meta.snap_len),
            });
        }
        if incl_len > orig_len {
            return Err(PcapError::InvalidFrameHeader {
                index: self.index,
                reason: format!("captured length {incl_len} exceeds original length {orig_len}"),
            });
        }

        let mut data = Vec::new();
        let got = (&mut self.inner).take(u64::from(incl_len)).read_to_end(&mut data)?;
        if got < incl_len as usize {
            return Err(PcapError::TruncatedFrame {
                index: self.index,
                offset: self.offset,
            });
        }

        let nanos = match self.meta.resolution {
            TsResolution::Micro => u64::from(ts_frac) * 1_000,
            TsResolution::Nano => u64::from(ts_frac),
        };
        let timestamp = Timestamp::from_nanos(u64::from(ts_sec) * 1_000_000_000 + nanos);
        self.offset += (RECORD_HEADER_LEN + got) as u64;
        self.index += 1;
        Ok(Some(RawFrame {
            timestamp,
            captured_len: incl_len,
            original_len: orig_len,
            data,
        }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<RawFrame, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_frame() {
            Ok(Some(frame)) => Some(Ok(frame)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Read until `buf` is full or EOF; returns the number of bytes read.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// A fully parsed capture. `truncation` holds the frame-level error that
/// stopped parsing early, if any; `frames` is the clean prefix before it.
#[derive(Debug)]
pub struct ParsedCapture {
    pub meta: CaptureMeta,
    pub frames: Vec<RawFrame>,
    pub truncation: Option<PcapError>,
}

/// Parse a whole capture from a reader.
///
/// Header problems are returned as `Err`; a damaged frame ends parsing and is
/// reported in [`ParsedCapture::truncation`] alongside the frames before it.
pub fn parse_capture<R: Read>(reader: R) -> Result<ParsedCapture, PcapError> {
    let mut rd = PcapReader::new(reader)?;
    let mut frames = Vec::new();
    let mut truncation = None;
    for item in rd.by_ref() {
        match item {
            Ok(f) => frames.push(f),
            Err(e) if e.is_frame_level() => truncation = Some(e),
            Err(e) => return Err(e),
        }
    }
    Ok(ParsedCapture {
        meta: rd.meta,
        frames,
        truncation,
    })
}
