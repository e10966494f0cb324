//! EVPT model checkpoints.
//!
//! Layout (little-endian): `"EVPT1"`, `u8` version, `u8` head code, `u8`
//! reserved (0), `u32` feature_dim, hidden_width, hidden_layers, `f32`
//! dropout, `u64` weight count, `f32` weights, CRC-64/XZ trailer.

use std::fs;
use std::path::Path;

use evident_core::predictor::{Architecture, DensePredictor, HeadKind};

use crate::darr::CRC64;
use crate::error::{EvidentError, Result};

pub const MAGIC: &[u8; 5] = b"EVPT1";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 5 + 3 + 12 + 4 + 8;

pub fn encode(model: &DensePredictor) -> std::result::Result<Vec<u8>, String> {
    let a = model.arch();
    let dim = |v: usize| u32::try_from(v).map_err(|_| format!("{v} does not fit in 32 bits"));
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * model.weights().len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, a.head.code(), 0]);
    out.extend_from_slice(&dim(a.feature_dim)?.to_le_bytes());
    out.extend_from_slice(&dim(a.hidden_width)?.to_le_bytes());
    out.extend_from_slice(&dim(a.hidden_layers)?.to_le_bytes());
    out.extend_from_slice(&(a.dropout as f32).to_le_bytes());
    out.extend_from_slice(&(model.weights().len() as u64).to_le_bytes());
    for &w in model.weights() {
        out.extend_from_slice(&(w as f32).to_le_bytes());
    }
    let crc = CRC64.checksum(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<DensePredictor, (u64, String)> {
    if bytes.len() < HEADER_LEN + 8 {
        return Err((bytes.len() as u64, "truncated header".into()));
    }
    if &bytes[..5] != MAGIC {
        return Err((0, "bad magic".into()));
    }
    if bytes[5] != VERSION {
        return Err((5, format!("unsupported version {}", bytes[5])));
    }
    let head = HeadKind::from_code(bytes[6]).map_err(|e| (6, e.to_string()))?;
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let dropout = f32::from_le_bytes(bytes[20..24].try_into().unwrap()) as f64;
    let n = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let end = usize::try_from(n)
        .ok()
        .and_then(|n| n.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or((24, "weight count overflows".to_string()))?;
    if bytes.len() != end + 8 {
        return Err((
            bytes.len().min(end) as u64,
            format!("expected {} bytes, found {}", end + 8, bytes.len()),
        ));
    }
    let stored = u64::from_le_bytes(bytes[end..].try_into().unwrap());
    if CRC64.checksum(&bytes[..end]) != stored {
        return Err((end as u64, "checksum mismatch".into()));
    }
    let arch = Architecture {
        feature_dim: u32_at(8),
        hidden_width: u32_at(12),
        hidden_layers: u32_at(16),
        dropout,
        head,
    };
    let weights = bytes[HEADER_LEN..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    DensePredictor::from_weights(arch, weights).map_err(|e| (8, e.to_string()))
}

pub fn save(path: &Path, model: &DensePredictor) -> Result<()> {
    let bytes = encode(model).map_err(|detail| EvidentError::Format {
        path: path.to_path_buf(),
        offset: 0,
        detail,
    })?;
    fs::write(path, bytes).map_err(|e| EvidentError::io(path, e))
}

pub fn load(path: &Path) -> Result<DensePredictor> {
    let bytes = fs::read(path).map_err(|e| EvidentError::io(path, e))?;
    decode(&bytes).map_err(|(offset, detail)| EvidentError::Format {
        path: path.to_path_buf(),
        offset,
        detail,
    })
}
