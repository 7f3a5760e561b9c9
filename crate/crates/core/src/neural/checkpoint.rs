//! Binary checkpoints: magic, version, JSON header, little-endian `f64`
//! parameters in declaration order, SHA-256 of everything before it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Network, NetworkConfig};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TTNC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    seed: u64,
}

pub fn to_bytes(net: &Network) -> Vec<u8> {
    let header = serde_json::to_vec(&Header { config: net.config().clone(), seed: net.seed() })
        .expect("config serializes");
    let mut out = Vec::with_capacity(16 + header.len() + net.num_params() * 8 + 32);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for p in net.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Network> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    if bytes.len() < 12 + 32 {
        return Err(bad("truncated"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch"));
    }
    if body[..4] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
    let header_end = 12usize.checked_add(header_len).filter(|&e| e <= body.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&body[12..header_end]).map_err(|e| bad(&format!("header: {e}")))?;
    let mut net = Network::skeleton(header.config)?;
    net.set_seed(header.seed);
    let values = &body[header_end..];
    if values.len() != net.num_params() * 8 {
        return Err(bad(&format!("{} parameter bytes, config needs {}", values.len(), net.num_params() * 8)));
    }
    let mut chunks = values.chunks_exact(8);
    for p in net.params_mut() {
        for (v, c) in p.data_mut().iter_mut().zip(&mut chunks) {
            *v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
    }
    if !net.params().iter().all(|p| p.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
