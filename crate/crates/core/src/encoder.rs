//! Embedding ingestion and the offline fallback text encoder.
//!
//! Real encoder outputs (image or sentence encoders run elsewhere) enter
//! through the `TGEMB1` binary format:
//!
//! ```text
//! "TGEMB1\0"                     7-byte magic
//! dim: u32 LE, rows: u32 LE
//! rows × (timestamp_ms: u64 LE, dim × f32 LE)
//! ```
//!
//! An optional sidecar `<file>.manifest.json` records the source model and
//! the sampling cadence.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EmbeddingStream, StreamError};

pub const EMBEDDING_MAGIC: &[u8; 7] = b"TGEMB1\0";

/// Seed mixed into the FNV-1a offset basis for trigram hashing. Changing it
/// changes every fallback vector.
pub const TRIGRAM_HASH_SEED: u64 = 0x5447_454d_4231_0001;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Smallest dimension accepted by the fallback encoder.
pub const MIN_FALLBACK_DIM: usize = 8;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("magic-number mismatch")]
    BadMagic,
    #[error("dimension must be positive")]
    ZeroDim,
    #[error("truncated embedding file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing bytes after {0} declared rows")]
    TrailingBytes(u32),
    #[error("non-monotone timestamps: {prev} ms then {next} ms")]
    NonMonotone { prev: u64, next: u64 },
    #[error("non-finite vector at {0} ms")]
    NonFinite(u64),
    #[error("fallback encoder dimension {0} is below {MIN_FALLBACK_DIM}")]
    DimTooSmall(usize),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Stream(StreamError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl From<StreamError> for EncoderError {
    fn from(err: StreamError) -> Self {
        match err {
            StreamError::NonMonotone { prev, next } => EncoderError::NonMonotone { prev, next },
            StreamError::NonFinite(t) => EncoderError::NonFinite(t),
            StreamError::ZeroDim => EncoderError::ZeroDim,
            other => EncoderError::Stream(other),
        }
    }
}

/// Sidecar metadata for an embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub source_model: String,
    pub cadence_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    IngestedFile,
    FallbackTextEncoder,
}

/// Where a session's vectors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSource {
    pub kind: SourceKind,
    pub dim: usize,
}

/// Decodes a `TGEMB1` buffer. Cadence is taken from the caller (usually the
/// manifest); use [`infer_cadence`] when none is known.
pub fn ingest_embedding_bytes(bytes: &[u8], cadence_ms: Option<u64>) -> Result<EmbeddingStream, EncoderError> {
    if bytes.len() < EMBEDDING_MAGIC.len() || &bytes[..EMBEDDING_MAGIC.len()] != EMBEDDING_MAGIC {
        return Err(EncoderError::BadMagic);
    }
    let header_end = EMBEDDING_MAGIC.len() + 8;
    if bytes.len() < header_end {
        return Err(EncoderError::Truncated { expected: header_end, found: bytes.len() });
    }
    let dim = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let rows = u32::from_le_bytes(bytes[11..15].try_into().unwrap());
    if dim == 0 {
        return Err(EncoderError::ZeroDim);
    }
    let row_len = 8 + 4 * dim;
    let expected = header_end + row_len * rows as usize;
    if bytes.len() < expected {
        return Err(EncoderError::Truncated { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(EncoderError::TrailingBytes(rows));
    }

    let mut entries = Vec::with_capacity(rows as usize);
    for row in bytes[header_end..].chunks_exact(row_len) {
        let t_ms = u64::from_le_bytes(row[..8].try_into().unwrap());
        let vector: Vec<f32> = row[8..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        entries.push((t_ms, vector));
    }
    let cadence = cadence_ms.unwrap_or_else(|| infer_cadence(&entries));
    Ok(EmbeddingStream::from_entries(dim, cadence, entries)?)
}

/// Smallest gap between consecutive timestamps, or 1000 ms for fewer than
/// two rows.
pub fn infer_cadence(entries: &[(u64, Vec<f32>)]) -> u64 {
    entries
        .windows(2)
        .map(|pair| pair[1].0.saturating_sub(pair[0].0))
        .filter(|gap| *gap > 0)
        .min()
        .unwrap_or(1000)
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Reads an embedding file and, if present, its sidecar manifest.
pub fn ingest_embedding_file(path: &Path) -> Result<(EmbeddingStream, Option<EmbeddingManifest>), EncoderError> {
    let bytes = fs::read(path).map_err(|source| EncoderError::Io { path: path.to_path_buf(), source })?;
    let sidecar = manifest_path(path);
    let manifest = match fs::read(&sidecar) {
        Ok(raw) => Some(
            serde_json::from_slice::<EmbeddingManifest>(&raw).map_err(|e| EncoderError::Manifest(e.to_string()))?,
        ),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(source) => return Err(EncoderError::Io { path: sidecar, source }),
    };
    let stream = ingest_embedding_bytes(&bytes, manifest.as_ref().map(|m| m.cadence_ms))?;
    Ok((stream, manifest))
}

pub fn encode_embedding_stream(stream: &EmbeddingStream) -> Vec<u8> {
    encode_rows(stream.dim(), stream.entries())
}

/// Encodes rows without validating them, so tests can build corrupt files.
pub fn encode_rows(dim: usize, rows: &[(u64, Vec<f32>)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(15 + rows.len() * (8 + 4 * dim));
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    for (t_ms, vector) in rows {
        out.extend_from_slice(&t_ms.to_le_bytes());
        for x in vector {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn write_embedding_file(
    path: &Path,
    stream: &EmbeddingStream,
    manifest: Option<&EmbeddingManifest>,
) -> Result<(), EncoderError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EncoderError::Io { path, source }
    };
    fs::write(path, encode_embedding_stream(stream)).map_err(io(path))?;
    if let Some(manifest) = manifest {
        let sidecar = manifest_path(path);
        let json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
        fs::write(&sidecar, json).map_err(io(&sidecar))?;
    }
    Ok(())
}

/// A text embedding; `empty` marks the zero vector produced for blank text.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub vector: Vec<f32>,
    pub empty: bool,
}

/// Anything that turns text into fixed-dimension vectors.
pub trait TextEncoder {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> TextEmbedding;
}

/// Deterministic bag of hashed character trigrams, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FallbackEncoder {
    dim: usize,
}

impl FallbackEncoder {
    pub fn new(dim: usize) -> Result<Self, EncoderError> {
        if dim < MIN_FALLBACK_DIM {
            return Err(EncoderError::DimTooSmall(dim));
        }
        Ok(FallbackEncoder { dim })
    }

    pub fn source(&self) -> EmbeddingSource {
        EmbeddingSource { kind: SourceKind::FallbackTextEncoder, dim: self.dim }
    }
}

impl TextEncoder for FallbackEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> TextEmbedding {
        fallback_embed_text(text, self.dim)
    }
}

/// Lowercases and collapses whitespace runs.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Character trigrams of the normalized text padded with one space on each
/// side. Blank text has none.
pub fn char_trigrams(text: &str) -> Vec<String> {
    let normalized = normalize_text(text);
    if normalized.is_empty() {
        return Vec::new();
    }
    let padded: Vec<char> = format!(" {normalized} ").chars().collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

fn trigram_bucket(trigram: &str, dim: usize) -> usize {
    let mut hash = FNV_OFFSET ^ TRIGRAM_HASH_SEED;
    for byte in trigram.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    (hash % dim as u64) as usize
}

/// Hashed-trigram embedding. Panics if `dim < 8`; use [`FallbackEncoder`]
/// for a checked constructor.
pub fn fallback_embed_text(text: &str, dim: usize) -> TextEmbedding {
    assert!(dim >= MIN_FALLBACK_DIM, "fallback encoder needs dim >= {MIN_FALLBACK_DIM}");
    let trigrams = char_trigrams(text);
    if trigrams.is_empty() {
        return TextEmbedding { vector: vec![0.0; dim], empty: true };
    }
    let mut counts = vec![0f64; dim];
    for trigram in &trigrams {
        counts[trigram_bucket(trigram, dim)] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    TextEmbedding { vector: counts.iter().map(|c| (c / norm) as f32).collect(), empty: false }
}
