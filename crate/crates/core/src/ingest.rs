//! Capture file to store: parse, decode, classify, persist.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::packet::decode_frame;
use crate::pcap::{parse_capture, PcapError};
use crate::store::{StoreError, TrafficStore};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error(transparent)]
    Capture(PcapError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<PcapError> for IngestError {
    fn from(e: PcapError) -> Self {
        match e {
            PcapError::Io(io) => IngestError::Store(StoreError::Io(io)),
            other => IngestError::Capture(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Frames read intact from the capture.
    pub frames: u64,
    pub records: u64,
    pub malformed: u64,
    pub new_devices: u64,
    /// Set when a damaged frame ended parsing early; the frames before it
    /// were still stored.
    pub truncated: bool,
    pub truncation: Option<String>,
    pub first_sequence: Option<u64>,
    pub last_sequence: Option<u64>,
}

/// Ingest one capture as a single batch.
///
/// Header errors store nothing. A truncated or damaged frame keeps the
/// prefix before it.
pub fn ingest_capture<R: Read>(store: &TrafficStore, reader: R) -> Result<IngestReport, IngestError> {
    let parsed = parse_capture(reader)?;
    let records: Vec<_> = parsed.frames.iter().map(|f| decode_frame(f, &parsed.meta)).collect();
    let malformed = records.iter().filter(|r| r.malformed).count() as u64;
    let frames = parsed.frames.len() as u64;
    let receipt = store.append_batch(records)?;
    Ok(IngestReport {
        frames,
        records: receipt.count,
        malformed,
        new_devices: receipt.new_devices,
        truncated: parsed.truncation.is_some(),
        truncation: parsed.truncation.map(|e| e.to_string()),
        first_sequence: receipt.first_sequence,
        last_sequence: receipt.last_sequence,
    })
}
