//! Binary dictionary and code files, and atomic file writes.
//!
//! Both formats are a magic line, an ASCII `rows cols` line, then
//! `rows * cols` little-endian `f64` values in row-major order.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frames::Dictionary;
use crate::matrix::Mat;

pub const DICTIONARY_MAGIC: &[u8] = b"PKSVD1\n";
pub const CODES_MAGIC: &[u8] = b"PKSVX1\n";

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn encode_matrix(magic: &[u8], m: &Mat) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.extend(format!("{} {}\n", m.nrows(), m.ncols()).bytes());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend(m[(r, c)].to_le_bytes());
        }
    }
    out
}

pub fn decode_matrix(magic: &[u8], bytes: &[u8]) -> Result<Mat> {
    let bad = |offset: usize, message: String| Error::MalformedFile { offset, message };
    if !bytes.starts_with(magic) {
        return Err(bad(
            0,
            format!("expected magic {:?}", String::from_utf8_lossy(magic)),
        ));
    }
    let start = magic.len();
    let eol = bytes[start..]
        .iter()
        .position(|&c| c == b'\n')
        .ok_or_else(|| bad(start, "missing shape line".into()))?;
    let line = std::str::from_utf8(&bytes[start..start + eol])
        .map_err(|_| bad(start, "shape line is not ASCII".into()))?;
    let mut parts = line.split(' ');
    let mut dim = || -> Result<usize> {
        parts
            .next()
            .and_then(|p| p.parse().ok())
            .filter(|&v: &usize| v > 0)
            .ok_or_else(|| bad(start, format!("bad shape line {line:?}")))
    };
    let rows = dim()?;
    let cols = dim()?;
    if line.split(' ').count() != 2 {
        return Err(bad(start, format!("bad shape line {line:?}")));
    }
    let body = start + eol + 1;
    let need = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| bad(start, "shape overflows".into()))?;
    let data = &bytes[body..];
    if data.len() != need {
        let offset = body + data.len().min(need);
        return Err(bad(
            offset,
            format!("expected {need} payload bytes, found {}", data.len()),
        ));
    }
    let mut m = Mat::zeros(rows, cols);
    for (i, chunk) in data.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        if !v.is_finite() {
            return Err(bad(body + 8 * i, "non-finite value".into()));
        }
        m[(i / cols, i % cols)] = v;
    }
    Ok(m)
}

pub fn write_dictionary(path: impl AsRef<Path>, d: &Dictionary) -> Result<()> {
    write_atomic(path, &encode_matrix(DICTIONARY_MAGIC, d.mat()))
}

pub fn read_dictionary(path: impl AsRef<Path>) -> Result<Dictionary> {
    Dictionary::new(decode_matrix(DICTIONARY_MAGIC, &std::fs::read(path)?)?)
}

pub fn write_codes(path: impl AsRef<Path>, x: &Mat) -> Result<()> {
    write_atomic(path, &encode_matrix(CODES_MAGIC, x))
}

pub fn read_codes(path: impl AsRef<Path>) -> Result<Mat> {
    decode_matrix(CODES_MAGIC, &std::fs::read(path)?)
}
