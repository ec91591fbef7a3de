//! Plan hand-off protocol: length-prefixed JSON frames over TCP.
//!
//! Frame layout: a 4-byte big-endian payload length followed by that many
//! bytes of UTF-8 JSON. Plans travel with a SHA-256 checksum of the XML
//! bytes, verified on decode. The exchange is strictly request/response —
//! the executor host never pushes frames, so nothing flows back to the
//! planning side while a mission runs; results are pulled afterwards with
//! `FetchReport`.

use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::plan::{serialize_plan, MissionPlan};

/// Hard ceiling on payload size, checked before any allocation.
pub const MAX_FRAME_LEN: u32 = 16 * 1024 * 1024;
/// Default executor-service port.
pub const DEFAULT_PORT: u16 = 7447;
/// Default request timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum WireError {
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_LEN}-byte limit")]
    FrameTooLarge(u32),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("plan checksum mismatch: header {header}, computed {computed}")]
    ChecksumMismatch { header: String, computed: String },
    #[error("connection lost: {0}")]
    ConnectionLost(String),
    #[error("timed out waiting for a response")]
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportStatus {
    Completed,
    Failed,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    SubmitPlan {
        mission_id: String,
        plan_xml: String,
        /// Hex SHA-256 of the plan XML bytes.
        checksum: String,
    },
    Ack {
        mission_id: String,
        accepted: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    FetchReport {
        mission_id: String,
    },
    Report {
        mission_id: String,
        status: ReportStatus,
        /// Newline-delimited JSON trace records; empty when unknown.
        trace: String,
    },
}

pub fn plan_checksum(plan_xml: &str) -> String {
    hex::encode(Sha256::digest(plan_xml.as_bytes()))
}

impl Message {
    /// Build a SubmitPlan with the checksum computed from the XML.
    pub fn submit_plan(mission_id: impl Into<String>, plan_xml: impl Into<String>) -> Message {
        let plan_xml = plan_xml.into();
        let checksum = plan_checksum(&plan_xml);
        Message::SubmitPlan { mission_id: mission_id.into(), plan_xml, checksum }
    }

    pub fn mission_id(&self) -> &str {
        match self {
            Message::SubmitPlan { mission_id, .. }
            | Message::Ack { mission_id, .. }
            | Message::FetchReport { mission_id }
            | Message::Report { mission_id, .. } => mission_id,
        }
    }
}

/// Encode one message as a complete frame.
pub fn encode(msg: &Message) -> Vec<u8> {
    let payload = serde_json::to_vec(msg).expect("messages always serialize");
    assert!(payload.len() as u64 <= MAX_FRAME_LEN as u64, "outbound frame too large");
    let mut out = Vec::with_capacity(4 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    out
}

fn decode_payload(payload: &[u8]) -> Result<Message, WireError> {
    let msg: Message = serde_json::from_slice(payload)
        .map_err(|e| WireError::MalformedPayload(e.to_string()))?;
    match &msg {
        Message::SubmitPlan { mission_id, plan_xml, checksum } => {
            if mission_id.is_empty() {
                return Err(WireError::MalformedPayload("empty mission_id".into()));
            }
            let computed = plan_checksum(plan_xml);
            if *checksum != computed {
                return Err(WireError::ChecksumMismatch { header: checksum.clone(), computed });
            }
        }
        Message::FetchReport { mission_id } => {
            if mission_id.is_empty() {
                return Err(WireError::MalformedPayload("empty mission_id".into()));
            }
        }
        // Responses may carry an empty id when they answer an undecodable
        // request.
        Message::Ack { .. } | Message::Report { .. } => {}
    }
    Ok(msg)
}

/// Decode exactly one complete frame.
pub fn decode(frame: &[u8]) -> Result<Message, WireError> {
    let mut decoder = FrameDecoder::new();
    match decoder.push(frame)? {
        Some(msg) if decoder.is_empty() => Ok(msg),
        Some(_) => Err(WireError::MalformedPayload("trailing bytes after frame".into())),
        None => Err(WireError::MalformedPayload("incomplete frame".into())),
    }
}

/// Incremental decoder: feed bytes in any chunking, get messages out.
/// Byte-at-a-time feeding decodes identically to whole-buffer feeding.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        FrameDecoder::default()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Append bytes; returns the first completed message, if any. Call with
    /// an empty slice to drain further queued frames.
    pub fn push(&mut self, bytes: &[u8]) -> Result<Option<Message>, WireError> {
        self.buf.extend_from_slice(bytes);
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let len = u32::from_be_bytes([self.buf[0], self.buf[1], self.buf[2], self.buf[3]]);
        if len > MAX_FRAME_LEN {
            return Err(WireError::FrameTooLarge(len));
        }
        let total = 4 + len as usize;
        if self.buf.len() < total {
            return Ok(None);
        }
        let msg = decode_payload(&self.buf[4..total])?;
        self.buf.drain(..total);
        Ok(Some(msg))
    }
}

/// Blocking request/response client for the executor service.
pub struct WireClient {
    stream: TcpStream,
    decoder: FrameDecoder,
}

impl WireClient {
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self, WireError> {
        let addr = addr
            .to_socket_addrs()
            .map_err(|e| WireError::ConnectionLost(e.to_string()))?
            .next()
            .ok_or_else(|| WireError::ConnectionLost("address resolves to nothing".into()))?;
        let stream = TcpStream::connect_timeout(&addr, timeout)
            .map_err(|e| WireError::ConnectionLost(e.to_string()))?;
        stream
            .set_read_timeout(Some(timeout))
            .map_err(|e| WireError::ConnectionLost(e.to_string()))?;
        stream
            .set_write_timeout(Some(timeout))
            .map_err(|e| WireError::ConnectionLost(e.to_string()))?;
        Ok(WireClient { stream, decoder: FrameDecoder::new() })
    }

    pub fn request(&mut self, msg: &Message) -> Result<Message, WireError> {
        let frame = encode(msg);
        self.stream.write_all(&frame).map_err(io_to_wire)?;
        let mut chunk = [0u8; 4096];
        loop {
            if let Some(reply) = self.decoder.push(&[])? {
                return Ok(reply);
            }
            let n = self.stream.read(&mut chunk).map_err(io_to_wire)?;
            if n == 0 {
                return Err(WireError::ConnectionLost("server closed the connection".into()));
            }
            if let Some(reply) = self.decoder.push(&chunk[..n])? {
                return Ok(reply);
            }
        }
    }

    /// Submit a plan and wait for the executor's accept/reject decision.
    pub fn submit(&mut self, plan: &MissionPlan) -> Result<Message, WireError> {
        let xml = serialize_plan(plan);
        let reply = self.request(&Message::submit_plan(plan.mission_id.clone(), xml))?;
        match reply {
            Message::Ack { .. } => Ok(reply),
            other => Err(WireError::MalformedPayload(format!(
                "expected ack, got {:?}",
                other.mission_id()
            ))),
        }
    }

    /// Ask for the post-completion report; `Unknown` covers ids the server
    /// has never seen and missions still executing.
    pub fn fetch_report(&mut self, mission_id: &str) -> Result<Message, WireError> {
        let reply = self.request(&Message::FetchReport { mission_id: mission_id.to_string() })?;
        match reply {
            Message::Report { .. } => Ok(reply),
            other => Err(WireError::MalformedPayload(format!(
                "expected report, got {:?}",
                other.mission_id()
            ))),
        }
    }
}

fn io_to_wire(e: std::io::Error) -> WireError {
    match e.kind() {
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => WireError::Timeout,
        _ => WireError::ConnectionLost(e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ack_round_trips() {
        let msg = Message::Ack { mission_id: "m1".into(), accepted: true, reason: None };
        let again = decode(&encode(&msg)).unwrap();
        assert_eq!(msg, again);
    }

    #[test]
    fn submit_plan_checksum_verified_on_decode() {
        let msg = Message::submit_plan("m1", "<mission id=\"m1\" robot=\"husky\"/>");
        let frame = encode(&msg);
        assert_eq!(decode(&frame).unwrap(), msg);

        // Corrupt one byte inside the plan_xml JSON string value.
        let mut corrupted = frame.clone();
        let payload = String::from_utf8(frame[4..].to_vec()).unwrap();
        let xml_at = payload.find("husky").unwrap() + 4;
        corrupted[4 + xml_at] = b'x';
        match decode(&corrupted) {
            Err(WireError::ChecksumMismatch { .. }) => {}
            other => panic!("expected checksum mismatch, got {:?}", other),
        }
    }

    #[test]
    fn oversized_length_rejected_before_allocation() {
        let mut frame = Vec::new();
        frame.extend_from_slice(&u32::MAX.to_be_bytes());
        frame.extend_from_slice(b"whatever");
        match decode(&frame) {
            Err(WireError::FrameTooLarge(len)) => assert_eq!(len, u32::MAX),
            other => panic!("expected frame-too-large, got {:?}", other),
        }
    }

    #[test]
    fn byte_at_a_time_decoding_matches_whole_buffer() {
        let msg = Message::Report {
            mission_id: "m2".into(),
            status: ReportStatus::Completed,
            trace: "{\"type\":\"header\"}\n".into(),
        };
        let frame = encode(&msg);
        let whole = decode(&frame).unwrap();

        let mut decoder = FrameDecoder::new();
        let mut result = None;
        for b in &frame {
            if let Some(m) = decoder.push(std::slice::from_ref(b)).unwrap() {
                result = Some(m);
            }
        }
        assert_eq!(result.unwrap(), whole);
        assert!(decoder.is_empty());
    }

    #[test]
    fn malformed_json_payload_rejected() {
        let mut frame = Vec::new();
        frame.extend_from_slice(&5u32.to_be_bytes());
        frame.extend_from_slice(b"notjs");
        assert!(matches!(decode(&frame), Err(WireError::MalformedPayload(_))));
    }

    #[test]
    fn requests_with_empty_mission_id_rejected() {
        let msg = Message::FetchReport { mission_id: String::new() };
        assert!(matches!(decode(&encode(&msg)), Err(WireError::MalformedPayload(_))));
        let msg = Message::submit_plan("", "<mission/>");
        assert!(matches!(decode(&encode(&msg)), Err(WireError::MalformedPayload(_))));
    }

    #[test]
    fn two_frames_in_one_buffer_decode_in_order() {
        let a = Message::FetchReport { mission_id: "a".into() };
        let b = Message::FetchReport { mission_id: "b".into() };
        let mut buf = encode(&a);
        buf.extend_from_slice(&encode(&b));
        let mut decoder = FrameDecoder::new();
        let first = decoder.push(&buf).unwrap().unwrap();
        let second = decoder.push(&[]).unwrap().unwrap();
        assert_eq!(first, a);
        assert_eq!(second, b);
        assert!(decoder.is_empty());
    }
}
