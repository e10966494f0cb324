//! DARR: a minimal dense-array container.
//!
//! Layout (all little-endian): `"DARR1"`, `u8` version, `u32` height, width,
//! channels, `H*W*C` row-major `f32` values, then a CRC-64/XZ of every
//! preceding byte.

use std::fs;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use evident_core::grid::Grid;

use crate::error::{EvidentError, Result};

pub const MAGIC: &[u8; 5] = b"DARR1";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 5 + 1 + 12;
pub(crate) const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

/// Encodes a grid. Values are stored as `f32`; non-finite values and empty
/// grids are rejected.
pub fn encode(grid: &Grid) -> std::result::Result<Vec<u8>, String> {
    let (h, w, c) = (grid.height(), grid.width(), grid.channels());
    if h == 0 || w == 0 || c == 0 {
        return Err(format!("refusing to write an empty {h}x{w}x{c} array"));
    }
    let dim = |v: usize| u32::try_from(v).map_err(|_| format!("dimension {v} does not fit in 32 bits"));
    let (h32, w32, c32) = (dim(h)?, dim(w)?, dim(c)?);
    if let Some(i) = grid.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(format!("non-finite value at element {i}"));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.as_slice().len() + 8);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&h32.to_le_bytes());
    out.extend_from_slice(&w32.to_le_bytes());
    out.extend_from_slice(&c32.to_le_bytes());
    for &v in grid.as_slice() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(format!("value {v} overflows f32"));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    let crc = CRC64.checksum(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Decodes a DARR buffer; errors carry the byte offset of the problem.
pub fn decode(bytes: &[u8]) -> std::result::Result<Grid, (u64, String)> {
    if bytes.len() < HEADER_LEN {
        return Err((bytes.len() as u64, format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..5] != MAGIC {
        return Err((0, "bad magic".into()));
    }
    if bytes[5] != VERSION {
        return Err((5, format!("unsupported version {}", bytes[5])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (h, w, c) = (u32_at(6), u32_at(10), u32_at(14));
    if h == 0 || w == 0 || c == 0 {
        return Err((6, format!("empty dimensions {h}x{w}x{c}")));
    }
    let n = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .ok_or((6, "dimensions overflow".to_string()))?;
    let payload_end = n
        .checked_mul(4)
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or((6, "dimensions overflow".to_string()))?;
    let expected = payload_end + 8;
    if bytes.len() < expected {
        return Err((
            bytes.len() as u64,
            format!("truncated: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err((expected as u64, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let stored = u64::from_le_bytes(bytes[payload_end..].try_into().unwrap());
    if CRC64.checksum(&bytes[..payload_end]) != stored {
        return Err((payload_end as u64, "checksum mismatch".into()));
    }
    let mut data = Vec::with_capacity(n);
    for (k, chunk) in bytes[HEADER_LEN..payload_end].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(((HEADER_LEN + 4 * k) as u64, "non-finite value".into()));
        }
        data.push(v as f64);
    }
    Grid::from_vec(h, w, c, data).map_err(|e| (6, e.to_string()))
}

pub fn write_array(path: &Path, grid: &Grid) -> Result<()> {
    let bytes = encode(grid).map_err(|detail| EvidentError::Format {
        path: path.to_path_buf(),
        offset: 0,
        detail,
    })?;
    fs::write(path, bytes).map_err(|e| EvidentError::io(path, e))
}

pub fn read_array(path: &Path) -> Result<Grid> {
    let bytes = fs::read(path).map_err(|e| EvidentError::io(path, e))?;
    decode(&bytes).map_err(|(offset, detail)| EvidentError::Format {
        path: path.to_path_buf(),
        offset,
        detail,
    })
}

/// Reads only the `(height, width, channels)` header.
pub fn read_dims(path: &Path) -> Result<(usize, usize, usize)> {
    use std::io::Read;
    let mut head = [0u8; HEADER_LEN];
    let mut f = fs::File::open(path).map_err(|e| EvidentError::io(path, e))?;
    f.read_exact(&mut head).map_err(|_| EvidentError::Format {
        path: path.to_path_buf(),
        offset: 0,
        detail: "truncated header".into(),
    })?;
    if &head[..5] != MAGIC {
        return Err(EvidentError::Format {
            path: path.to_path_buf(),
            offset: 0,
            detail: "bad magic".into(),
        });
    }
    let u = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap()) as usize;
    Ok((u(6), u(10), u(14)))
}
