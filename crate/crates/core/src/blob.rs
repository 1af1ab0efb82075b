//! Raw little-endian f64 blobs and TOML manifests.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const BYTE_ORDER: &str = "little";
pub const PRECISION: &str = "f64";

pub fn encode_f64_le(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f64_le(bytes: &[u8]) -> Option<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    )
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Writes the blob and returns its SHA-256 digest.
pub fn write_f64_le(path: &Path, values: &[f64]) -> Result<String> {
    let bytes = encode_f64_le(values);
    write_bytes(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn read_f64_le(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let values = decode_f64_le(&bytes)
        .ok_or_else(|| Error::artifact(path, "blob length is not a multiple of 8 bytes"))?;
    if values.len() != expected_len {
        return Err(Error::artifact(
            path,
            format!("expected {expected_len} values, found {}", values.len()),
        ));
    }
    Ok(values)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value)
        .map_err(|e| Error::artifact(path, format!("cannot serialise manifest: {e}")))?;
    write_bytes(path, text.as_bytes())
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::artifact(path, e.to_string()))
}
