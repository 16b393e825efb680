//! Versioned binary model files.
//!
//! Layout, integers little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `HYBRIDAE` |
//! | 4     | format version |
//! | 8     | creation time, Unix seconds |
//! | 8     | payload length |
//! | 32    | SHA-256 of version, length and payload |
//! | n     | bincode payload |
//!
//! The timestamp is the only field outside the checksum, so two saves of the
//! same model differ in those eight bytes alone.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use hybridae::pipeline::TrainedPipeline;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"HYBRIDAE";
pub const FORMAT_VERSION: u32 = 1;
pub const TIMESTAMP_RANGE: std::ops::Range<usize> = 12..20;
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPayload {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub pipeline: TrainedPipeline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub format_version: u32,
    pub created_unix: u64,
    pub payload: ModelPayload,
}

fn checksum(version: u32, len: u64, payload: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(version.to_le_bytes());
    h.update(len.to_le_bytes());
    h.update(payload);
    h.finalize().into()
}

pub fn encode_model(payload: &ModelPayload, created_unix: u64) -> Vec<u8> {
    let body = bincode::serialize(payload).expect("model serializes");
    let len = body.len() as u64;
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&created_unix.to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&checksum(FORMAT_VERSION, len, &body));
    out.extend_from_slice(&body);
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelFile> {
    if bytes.len() >= 8 && &bytes[..8] != MAGIC {
        return Err(HarnessError::BadMagic);
    }
    if bytes.len() < 12 {
        return Err(HarnessError::Checksum);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(HarnessError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    if bytes.len() < HEADER_LEN {
        return Err(HarnessError::Checksum);
    }
    let created_unix = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let len = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let stored: [u8; 32] = bytes[28..60].try_into().unwrap();
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != len || checksum(version, len, body) != stored {
        return Err(HarnessError::Checksum);
    }
    let payload = bincode::deserialize(body).map_err(|e| HarnessError::Decode(e.to_string()))?;
    Ok(ModelFile { format_version: version, created_unix, payload })
}

pub fn save_model(path: &Path, payload: &ModelPayload) -> Result<()> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    std::fs::write(path, encode_model(payload, now)).map_err(|e| HarnessError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode_model(&bytes)
}

/// File bytes with the timestamp zeroed.
pub fn without_timestamp(bytes: &[u8]) -> Vec<u8> {
    let mut out = bytes.to_vec();
    if out.len() >= TIMESTAMP_RANGE.end {
        out[TIMESTAMP_RANGE].fill(0);
    }
    out
}
