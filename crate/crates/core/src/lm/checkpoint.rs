//! Binary checkpoints: the magic `CADPLM1`, three little-endian `u64`
//! dimensions (vocab size, d_emb, d_hid), then every parameter as a
//! little-endian `f64` in flat order.

use std::fs;
use std::path::Path;

use super::{Layout, LmParameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"CADPLM1";
const HEADER_LEN: usize = 7 + 3 * 8;

pub fn encode_checkpoint<T: Scalar>(params: &LmParameters<T>) -> Vec<u8> {
    let l = params.layout();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * l.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for d in [l.vocab_size, l.d_emb, l.d_hid] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in params.flat_view() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8], expected: Option<Layout>) -> Result<LmParameters<T>> {
    if bytes.len() < HEADER_LEN || &bytes[..7] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("missing CADPLM1 header".into()));
    }
    let dim = |i: usize| {
        let start = 7 + 8 * i;
        u64::from_le_bytes(bytes[start..start + 8].try_into().unwrap()) as usize
    };
    let layout = Layout::new(dim(0), dim(1), dim(2))
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if let Some(exp) = expected {
        if exp != layout {
            return Err(Error::Checkpoint(format!(
                "header describes {layout:?}, expected {exp:?}"
            )));
        }
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * layout.param_count() {
        return Err(Error::Checkpoint(format!(
            "body holds {} bytes, header implies {}",
            body.len(),
            8 * layout.param_count()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    LmParameters::from_flat(layout, values)
}

pub fn save_checkpoint<T: Scalar>(params: &LmParameters<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint, rejecting it when `expected` is given and the header
/// dimensions differ.
pub fn load_checkpoint<T: Scalar>(path: &Path, expected: Option<Layout>) -> Result<LmParameters<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, expected)
}
