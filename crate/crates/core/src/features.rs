//! Binary container for log-mel matrices.
//!
//! ```text
//! "LMEL" | version: u8 = 1 | frames: u32 LE | bins: u32 LE | frames·bins × f32 LE
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::dsp::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"LMEL";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

pub fn encode_logmel(m: &Matrix<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.data.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(m.rows as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols as u32).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_logmel(bytes: &[u8]) -> Result<Matrix<f32>> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedPayload(format!("{} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != MAGIC {
        return Err(Error::BadMagic { expected: MAGIC, found });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload(format!("{} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    if bytes[4] != VERSION {
        return Err(Error::VersionMismatch {
            found: bytes[4] as u32,
            supported: VERSION as u32,
        });
    }
    let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let need = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::CorruptManifest(format!("{rows}×{cols} overflows")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < need {
        return Err(Error::TruncatedPayload(format!("{} of {need} payload bytes", payload.len())));
    }
    if payload.len() > need {
        return Err(Error::CorruptManifest(format!(
            "{} trailing bytes after a {rows}×{cols} payload",
            payload.len() - need
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn write_logmel(path: impl AsRef<Path>, m: &Matrix<f32>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_logmel(m))?;
    Ok(())
}

pub fn read_logmel(path: impl AsRef<Path>) -> Result<Matrix<f32>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_logmel(&bytes)
}
