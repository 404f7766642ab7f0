//! `HALPEMB1` files: an 24-byte little-endian header followed by `count`
//! rows of `dim` f32 values.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "HALPEMB1"
//! 8       4     version (u32) = 1
//! 12      4     dim (u32)
//! 16      8     count (u64)
//! 24      ...   payload, row-major f32
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sphere::UnitVector;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"HALPEMB1";
pub const EMBEDDING_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

/// Writes raw f32 rows. Every row must have length `dim`.
pub fn write_embedding_rows(path: impl AsRef<Path>, dim: usize, rows: &[Vec<f32>]) -> Result<()> {
    let path = path.as_ref();
    let dim32 = u32::try_from(dim).map_err(|_| Error::ConfigInvalid(format!("dim {dim} too large")))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + rows.len() * dim * 4);
    buf.extend_from_slice(EMBEDDING_MAGIC);
    buf.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    buf.extend_from_slice(&dim32.to_le_bytes());
    buf.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for row in rows {
        if row.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        for x in row {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Writes unit vectors, narrowing each component to f32.
pub fn write_embeddings(path: impl AsRef<Path>, vectors: &[UnitVector]) -> Result<()> {
    let dim = vectors.first().map_or(0, UnitVector::dim);
    let rows: Vec<Vec<f32>> = vectors
        .iter()
        .map(|v| v.as_slice().iter().map(|&x| x as f32).collect())
        .collect();
    write_embedding_rows(path, dim, &rows)
}

fn parse(bytes: &[u8]) -> Result<(usize, Vec<Vec<f32>>)> {
    if bytes.len() < 8 || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != EMBEDDING_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim = u32_at(12) as usize;
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    let expected = count
        .checked_mul(dim as u64)
        .and_then(|n| n.checked_mul(4))
        .unwrap_or(u64::MAX);
    let found = payload.len() as u64;
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingData(found - expected));
    }
    let rows = if dim == 0 {
        vec![Vec::new(); count as usize]
    } else {
        payload
            .chunks_exact(dim * 4)
            .map(|row| {
                row.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                    .collect()
            })
            .collect()
    };
    Ok((dim, rows))
}

/// Reads raw f32 rows without normalizing. Returns `(dim, rows)`.
pub fn read_embedding_rows(path: impl AsRef<Path>) -> Result<(usize, Vec<Vec<f32>>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes)
}

/// Reads an embedding file, projecting every row onto the unit sphere.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<UnitVector>> {
    let (_, rows) = read_embedding_rows(path)?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let wide: Vec<f64> = row.iter().map(|&x| f64::from(x)).collect();
            UnitVector::project(&wide).map_err(|e| match e {
                Error::ZeroVector { .. } => Error::ZeroRow(i),
                other => other,
            })
        })
        .collect()
}
