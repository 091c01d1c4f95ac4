//! Bit-exact binary matrix files.
//!
//! Layout: magic bytes `ADMX`, u32 version = 1, u32 rows, u32 cols, then
//! rows×cols little-endian IEEE-754 f64 in row-major order. The payload
//! (everything after the magic and version) is reused by the checkpoint
//! format.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAT_MAGIC: &[u8; 4] = b"ADMX";
pub const MAT_VERSION: u32 = 1;

/// 64-bit FNV-1a hash, used as the corpus and checkpoint checksum.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Serializes rows, cols and data (no magic/version).
pub fn write_payload(out: &mut Vec<u8>, m: &Matrix) {
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Reads a payload written by [`write_payload`].
pub fn read_payload(reader: &mut impl Read, path: &str) -> Result<Matrix> {
    let rows = read_u32(reader, path)? as usize;
    let cols = read_u32(reader, path)? as usize;
    if rows == 0 || cols == 0 || rows.saturating_mul(cols) > (1 << 28) {
        return Err(Error::format(path, format!("implausible shape {rows}x{cols}")));
    }
    let mut data = vec![0.0f64; rows * cols];
    let mut buf = [0u8; 8];
    for slot in data.iter_mut() {
        reader
            .read_exact(&mut buf)
            .map_err(|_| Error::format(path, "truncated matrix data"))?;
        *slot = f64::from_le_bytes(buf);
    }
    Matrix::from_vec(rows, cols, data)
}

pub(crate) fn read_u32(reader: &mut impl Read, path: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| Error::format(path, "truncated header"))?;
    Ok(u32::from_le_bytes(buf))
}

/// Full `.mat` file bytes for a matrix.
pub fn mat_bytes(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + m.data().len() * 8);
    out.extend_from_slice(MAT_MAGIC);
    out.extend_from_slice(&MAT_VERSION.to_le_bytes());
    write_payload(&mut out, m);
    out
}

/// Parses `.mat` file bytes.
pub fn parse_mat_bytes(bytes: &[u8], path: &str) -> Result<Matrix> {
    let mut reader = bytes;
    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::format(path, "file too short for magic"))?;
    if &magic != MAT_MAGIC {
        return Err(Error::format(path, "bad magic (expected ADMX)"));
    }
    let version = read_u32(&mut reader, path)?;
    if version != MAT_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let m = read_payload(&mut reader, path)?;
    if !reader.is_empty() {
        return Err(Error::format(path, "trailing bytes after matrix data"));
    }
    Ok(m)
}

pub fn write_mat(path: &Path, m: &Matrix) -> Result<()> {
    let bytes = mat_bytes(m);
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn read_mat(path: &Path) -> Result<Matrix> {
    let bytes = std::fs::read(path)?;
    parse_mat_bytes(&bytes, &path.display().to_string())
}
