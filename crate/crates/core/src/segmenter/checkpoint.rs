//! Checkpoint layout:
//!
//! ```text
//! header_len: u32 LE
//! header:     header_len bytes of JSON {format, config, seed, param_count}
//! params:     param_count × f32 LE
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CausalTcnConfig, CausalTcnModel, SegmenterError};

pub const CHECKPOINT_FORMAT: &str = "tgtcn1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub config: CausalTcnConfig,
    pub seed: u64,
    pub param_count: usize,
}

pub fn encode_checkpoint(model: &CausalTcnModel) -> Vec<u8> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.to_string(),
        config: model.config().clone(),
        seed: model.seed(),
        param_count: model.param_count(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(4 + json.len() + 4 * model.param_count());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        out.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<CausalTcnModel, SegmenterError> {
    let bad = |msg: &str| SegmenterError::Checkpoint(msg.to_string());
    let len_bytes: [u8; 4] = bytes.get(..4).ok_or_else(|| bad("truncated header length"))?.try_into().unwrap();
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let json = bytes.get(4..4 + header_len).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(json).map_err(|e| SegmenterError::Checkpoint(e.to_string()))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(SegmenterError::Checkpoint(format!("unknown format {:?}", header.format)));
    }
    let blob = &bytes[4 + header_len..];
    if blob.len() != 4 * header.param_count {
        return Err(SegmenterError::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            4 * header.param_count,
            blob.len()
        )));
    }
    let params: Vec<f32> = blob.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    CausalTcnModel::from_parameters(header.config, header.seed, &params)
}

pub fn write_checkpoint(path: &Path, model: &CausalTcnModel) -> Result<(), SegmenterError> {
    fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<CausalTcnModel, SegmenterError> {
    decode_checkpoint(&fs::read(path)?)
}
