//! Pluggable frozen text encoder.
//!
//! The separation network only ever sees a 768-dim sentence vector through
//! [`TextEncoderPort`]. Two implementations:
//!
//! - [`HashTextEncoder`]: fully self-contained. Tokens hash into a frozen
//!   random table and the sentence vector is the token mean. Deterministic,
//!   no external assets, and by construction no gradient can reach it.
//! - [`SidecarTextEncoder`]: precomputed embeddings from any external
//!   pretrained sentence encoder, loaded from a JSONL sidecar keyed by the
//!   exact clue string.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use crate::numerics::Tensor;
use crate::seeding::{fnv1a64, stream_rng};

use super::ClueError;

/// Sentence embedding width.
pub const TEXT_DIM: usize = 768;
/// Token cap; longer inputs are truncated with a warning.
pub const MAX_TOKENS: usize = 20;

pub trait TextEncoderPort {
    /// Deterministic sentence embedding of shape `[768]`.
    fn encode(&self, text: &str) -> Result<Tensor, ClueError>;
}

/// Lowercase alphanumeric tokenization, capped at [`MAX_TOKENS`].
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens: Vec<String> = text
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect();
    if tokens.len() > MAX_TOKENS {
        log::warn!("text clue truncated from {} to {} tokens", tokens.len(), MAX_TOKENS);
        tokens.truncate(MAX_TOKENS);
    }
    tokens
}

pub struct HashTextEncoder {
    table: Vec<f64>,
    rows: usize,
}

impl HashTextEncoder {
    pub fn new(seed: u64) -> HashTextEncoder {
        let rows = 1024;
        let mut rng = stream_rng(seed, &["text-table"]);
        let scale = 1.0 / (TEXT_DIM as f64).sqrt();
        let table = (0..rows * TEXT_DIM).map(|_| rng.gen_range(-scale..scale)).collect();
        HashTextEncoder { table, rows }
    }

    /// Content hash of the frozen table; training must never change it.
    pub fn table_hash(&self) -> u64 {
        let bytes: Vec<u8> = self.table.iter().flat_map(|v| v.to_le_bytes()).collect();
        fnv1a64(&bytes)
    }
}

impl TextEncoderPort for HashTextEncoder {
    fn encode(&self, text: &str) -> Result<Tensor, ClueError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(ClueError::EmptyText);
        }
        let mut out = vec![0.0f64; TEXT_DIM];
        for tok in &tokens {
            let row = (fnv1a64(tok.as_bytes()) % self.rows as u64) as usize;
            let src = &self.table[row * TEXT_DIM..(row + 1) * TEXT_DIM];
            for (o, &v) in out.iter_mut().zip(src) {
                *o += v;
            }
        }
        let inv = 1.0 / tokens.len() as f64;
        for o in &mut out {
            *o *= inv;
        }
        Ok(Tensor::from_vec(out))
    }
}

#[derive(Deserialize)]
struct SidecarRow {
    text: String,
    vector: Vec<f64>,
}

/// Embeddings precomputed offline, one JSONL row per clue string:
/// `{"text": "...", "vector": [768 floats]}`.
pub struct SidecarTextEncoder {
    map: HashMap<String, Tensor>,
}

impl SidecarTextEncoder {
    pub fn load(path: impl AsRef<Path>) -> Result<SidecarTextEncoder, ClueError> {
        let path = path.as_ref();
        let f = std::fs::File::open(path)
            .map_err(|e| ClueError::Sidecar(format!("{}: {}", path.display(), e)))?;
        let mut map = HashMap::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| ClueError::Sidecar(format!("{} line {}: {}", path.display(), i + 1, e)))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: SidecarRow = serde_json::from_str(&line)
                .map_err(|e| ClueError::Sidecar(format!("{} line {}: {}", path.display(), i + 1, e)))?;
            if row.vector.len() != TEXT_DIM {
                return Err(ClueError::Sidecar(format!(
                    "{} line {}: vector has {} dims, expected {}",
                    path.display(),
                    i + 1,
                    row.vector.len(),
                    TEXT_DIM
                )));
            }
            map.insert(row.text, Tensor::from_vec(row.vector));
        }
        Ok(SidecarTextEncoder { map })
    }
}

impl TextEncoderPort for SidecarTextEncoder {
    fn encode(&self, text: &str) -> Result<Tensor, ClueError> {
        if tokenize(text).is_empty() {
            return Err(ClueError::EmptyText);
        }
        self.map
            .get(text)
            .cloned()
            .ok_or_else(|| ClueError::MissingEmbedding(text.to_string()))
    }
}
