//! Binary checkpoint: magic, format version, a JSON header, then parameters
//! and both Adam moment vectors as little-endian `f64`.
//!
//! ```text
//! "AQPLSTM\n" | version u32 | header length u64 | header JSON | body
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Layout, LstmModel};
use super::train::AdamState;
use super::{LabelNorm, ModelConfig, NnetError, Result};
use crate::hash::sha256_hex;

const MAGIC: &[u8; 8] = b"AQPLSTM\n";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    label_norm: LabelNorm,
    vocab_hash: Option<String>,
    epochs_trained: usize,
    best_val_mse: Option<f64>,
    adam_step: u64,
    param_count: usize,
    body_sha256: String,
}

fn corrupt(msg: impl Into<String>) -> NnetError {
    NnetError::CorruptCheckpoint(msg.into())
}

impl LstmModel {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut body = Vec::with_capacity(self.params.len() * 24);
        for v in self.params.iter().chain(&self.adam.m).chain(&self.adam.v) {
            body.extend_from_slice(&v.to_le_bytes());
        }
        let header = Header {
            config: self.config.clone(),
            label_norm: self.norm,
            vocab_hash: self.vocab_hash.clone(),
            epochs_trained: self.epochs_trained,
            best_val_mse: self.best_val_mse,
            adam_step: self.adam.step,
            param_count: self.params.len(),
            body_sha256: sha256_hex(&body),
        };
        let header = serde_json::to_vec(&header).expect("checkpoint header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + body.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&body);
        out
    }

    /// Decodes a checkpoint. When `expected_vocab_hash` is given it must equal
    /// the vocabulary hash recorded at training time.
    pub fn from_checkpoint_bytes(bytes: &[u8], expected_vocab_hash: Option<&str>) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a model checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(NnetError::VersionMismatch {
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let header_end = 20usize.checked_add(header_len).filter(|&e| e <= bytes.len());
        let header_end = header_end.ok_or_else(|| corrupt("truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[20..header_end]).map_err(|e| corrupt(format!("bad header: {e}")))?;

        if let Some(expected) = expected_vocab_hash {
            let found = header.vocab_hash.as_deref().unwrap_or("");
            if found != expected {
                return Err(NnetError::VocabularyMismatch {
                    expected: expected.to_owned(),
                    found: found.to_owned(),
                });
            }
        }
        header.config.validate()?;
        let layout = Layout::new(&header.config);
        let n = header.param_count;
        if n != layout.len() {
            return Err(corrupt(format!("{n} parameters for a layout of {}", layout.len())));
        }
        let body = &bytes[header_end..];
        if body.len() != n * 24 {
            return Err(corrupt(format!("body is {} bytes, expected {}", body.len(), n * 24)));
        }
        if sha256_hex(body) != header.body_sha256 {
            return Err(corrupt("body checksum mismatch"));
        }
        let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let params: Vec<f64> = values.by_ref().take(n).collect();
        let m: Vec<f64> = values.by_ref().take(n).collect();
        let v: Vec<f64> = values.collect();
        Ok(Self {
            config: header.config,
            layout,
            params,
            norm: header.label_norm,
            vocab_hash: header.vocab_hash,
            adam: AdamState {
                m,
                v,
                step: header.adam_step,
            },
            epochs_trained: header.epochs_trained,
            best_val_mse: header.best_val_mse,
        })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".partial");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&self.to_checkpoint_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, expected_vocab_hash: Option<&str>) -> Result<Self> {
        Self::from_checkpoint_bytes(&fs::read(path)?, expected_vocab_hash)
    }
}
