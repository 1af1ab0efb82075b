//! Network checkpoints: a TOML manifest next to a raw parameter blob.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Activation, Mlp, NetRole};
use crate::blob;
use crate::{Error, Result};

pub const NET_FORMAT: &str = "flowmap-net/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetManifest {
    pub format: String,
    pub role: NetRole,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub noise_dim: Option<usize>,
    /// Seed the network was trained from and how it was derived.
    pub seed: u64,
    pub lineage: String,
    pub param_count: usize,
    pub precision: String,
    pub byte_order: String,
    pub blob: String,
    pub blob_sha256: String,
}

/// Writes `<stem>.toml` and `<stem>.bin` into `dir`; returns the manifest path.
pub fn save_net(
    dir: &Path,
    stem: &str,
    net: &Mlp,
    role: NetRole,
    noise_dim: Option<usize>,
    seed: u64,
    lineage: &str,
) -> Result<PathBuf> {
    let blob_name = format!("{stem}.bin");
    let digest = blob::write_f64_le(&dir.join(&blob_name), net.params())?;
    let manifest = NetManifest {
        format: NET_FORMAT.into(),
        role,
        widths: net.widths().to_vec(),
        activation: net.activation(),
        noise_dim,
        seed,
        lineage: lineage.into(),
        param_count: net.params().len(),
        precision: blob::PRECISION.into(),
        byte_order: blob::BYTE_ORDER.into(),
        blob: blob_name,
        blob_sha256: digest,
    };
    let path = dir.join(format!("{stem}.toml"));
    blob::write_toml(&path, &manifest)?;
    Ok(path)
}

pub fn load_net(manifest_path: &Path) -> Result<(Mlp, NetManifest)> {
    let manifest: NetManifest = blob::read_toml(manifest_path)?;
    if manifest.format != NET_FORMAT {
        return Err(Error::artifact(
            manifest_path,
            format!("unsupported format {:?}", manifest.format),
        ));
    }
    if manifest.precision != blob::PRECISION || manifest.byte_order != blob::BYTE_ORDER {
        return Err(Error::artifact(manifest_path, "only little-endian f64 blobs are supported"));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let params = blob::read_f64_le(&dir.join(&manifest.blob), manifest.param_count)?;
    let net = Mlp::with_params(&manifest.widths, manifest.activation, params)
        .map_err(|e| Error::artifact(manifest_path, e.to_string()))?;
    Ok((net, manifest))
}
