//! Patch-feature matrices on disk: magic `BFNF`, u32 version, u32 rows, u32 cols
//! (little-endian), then `rows·cols` little-endian f32 values in row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BFNF_MAGIC: &[u8; 4] = b"BFNF";
pub const BFNF_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

fn format_err(offset: usize, detail: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, detail: detail.into() }
}

/// Serializes a matrix. Values are stored as f32, so only f32-representable
/// inputs survive a round trip unchanged.
pub fn encode_features(t: &Tensor) -> Result<Vec<u8>> {
    let (rows, cols) = (t.rows(), t.cols());
    if t.shape().len() != 2 {
        return Err(Error::shape("write_feature_file", "expected a matrix"));
    }
    let dim = |v: usize| u32::try_from(v).map_err(|_| Error::shape("write_feature_file", "dimension exceeds u32"));
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.len());
    out.extend_from_slice(BFNF_MAGIC);
    out.extend_from_slice(&BFNF_VERSION.to_le_bytes());
    out.extend_from_slice(&dim(rows)?.to_le_bytes());
    out.extend_from_slice(&dim(cols)?.to_le_bytes());
    for (i, &v) in t.data().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(format_err(HEADER_LEN + 4 * i, format!("value {v} is not a finite f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4-byte slice")))
        .ok_or_else(|| format_err(bytes.len(), "file ends inside the header"))
}

pub fn decode_features(bytes: &[u8]) -> Result<Tensor> {
    match bytes.get(..4) {
        Some(m) if m == BFNF_MAGIC => {}
        Some(_) => return Err(format_err(0, "bad magic; expected BFNF")),
        None => return Err(format_err(bytes.len(), "file ends inside the header")),
    }
    let version = u32_at(bytes, 4)?;
    if version != BFNF_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let rows = u32_at(bytes, 8)? as usize;
    let cols = u32_at(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(format_err(8, format!("empty matrix {rows}×{cols}")));
    }
    let expected =
        rows.checked_mul(cols).and_then(|n| n.checked_mul(4)).ok_or_else(|| format_err(8, "matrix size overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: header declares {rows}×{cols} ({expected} bytes), found {}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(format_err(HEADER_LEN + expected, "trailing bytes after payload"));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(format_err(HEADER_LEN + 4 * i, format!("non-finite value {v}")));
        }
        data.push(v as f64);
    }
    Tensor::matrix(rows, cols, data)
}

pub fn write_feature_file(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_features(t)?).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}
