//! SHA-256 content hashes used to chain pipeline artifacts.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical (compact, field-ordered) JSON form of `value`.
pub fn json_hash<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

pub fn file_hash(path: impl AsRef<std::path::Path>) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}
