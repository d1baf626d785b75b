//! Stream protocol frames and their canonical NDJSON encoding.
//!
//! Every frame is one line: a JSON object with exactly two members, `type`
//! and `payload`, keys sorted bytewise at every depth, no insignificant
//! whitespace, terminated by `\n`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::scene::{Connection, PacketEvent, SceneNode};
use crate::time::Timestamp;

pub const PROTOCOL_VERSION: u32 = 1;

/// Maximum events (or nodes, or connections) carried by one frame.
pub const MAX_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// The query message was not valid JSON or failed validation.
    InvalidQuery,
    /// The store could not be read.
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum StreamFrame {
    Hello {
        protocol_version: u32,
        /// Bounds of all stored traffic; absent for an empty store.
        capture_start: Option<Timestamp>,
        capture_end: Option<Timestamp>,
    },
    Devices {
        nodes: Vec<SceneNode>,
    },
    Connections {
        connections: Vec<Connection>,
    },
    Packets {
        events: Vec<PacketEvent>,
    },
    Progress {
        replay_ts: Timestamp,
        emitted: u64,
    },
    End {
        events: u64,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl StreamFrame {
    pub fn kind(&self) -> &'static str {
        match self {
            StreamFrame::Hello { .. } => "hello",
            StreamFrame::Devices { .. } => "devices",
            StreamFrame::Connections { .. } => "connections",
            StreamFrame::Packets { .. } => "packets",
            StreamFrame::Progress { .. } => "progress",
            StreamFrame::End { .. } => "end",
            StreamFrame::Error { .. } => "error",
        }
    }

    /// True for `end` and `error`, after which a session sends nothing.
    pub fn is_terminal(&self) -> bool {
        matches!(self, StreamFrame::End { .. } | StreamFrame::Error { .. })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("frame is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("frame is not a single line")]
    NotOneLine,
}

/// Canonical line for `frame`, including the trailing newline.
pub fn encode_frame(frame: &StreamFrame) -> String {
    let value = serde_json::to_value(frame).expect("frames contain only string map keys");
    let mut out = String::with_capacity(128);
    write_canonical(&value, &mut out);
    out.push('\n');
    out
}

pub fn write_frame<W: Write>(w: &mut W, frame: &StreamFrame) -> io::Result<()> {
    w.write_all(encode_frame(frame).as_bytes())
}

/// Parse one line, with or without its trailing newline.
pub fn decode_frame(line: &str) -> Result<StreamFrame, WireError> {
    let body = line.strip_suffix('\n').unwrap_or(line);
    if body.contains('\n') {
        return Err(WireError::NotOneLine);
    }
    Ok(serde_json::from_str(body)?)
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push('{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}
