//! On-disk formats shared by the three parties.
//!
//! `MatrixFile` (magic `SCAM`): version `u32`, `n_dims u64`, `n_points
//! u64`, then exactly `8 * n_dims * n_points` bytes of column-major
//! little-endian `f64`.
//!
//! `SparseCodeFile` (magic `SCAC`): version `u32`, `code_len u64`, `count
//! u64`, then per code an `nnz u32` followed by `nnz` pairs of (`index
//! u32`, `value f64`), indices strictly increasing and below `code_len`.
//!
//! All integers are little endian. Readers report the byte offset of the
//! first violation, so a corrupted file points at its own defect.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use sca_core::{DataMatrix, SparseCode};

use crate::error::{CliError, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"SCAM";
pub const CODES_MAGIC: &[u8; 4] = b"SCAC";
pub const FORMAT_VERSION: u32 = 1;

/// Byte-slice reader that remembers where it is.
struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self {
            bytes,
            offset: 0,
            path,
        }
    }

    fn fail(&self, offset: usize, message: String) -> CliError {
        CliError::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message,
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.offset < n {
            return Err(self.fail(
                self.offset,
                format!(
                    "truncated while reading {what}: expected {n} more bytes, file has {}",
                    self.bytes.len() - self.offset
                ),
            ));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn read_u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn read_f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let at = self.offset;
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(self.fail(
                at,
                format!(
                    "bad magic: expected {:?}, got {:?}",
                    String::from_utf8_lossy(magic),
                    String::from_utf8_lossy(got)
                ),
            ));
        }
        Ok(())
    }

    fn expect_version(&mut self) -> Result<()> {
        let at = self.offset;
        let v = self.read_u32("format version")?;
        if v != FORMAT_VERSION {
            return Err(self.fail(
                at,
                format!("unsupported format version: expected {FORMAT_VERSION}, got {v}"),
            ));
        }
        Ok(())
    }

    fn expect_end(&mut self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(self.fail(
                self.offset,
                format!(
                    "trailing bytes: expected end of file at {}, file has {}",
                    self.offset,
                    self.bytes.len()
                ),
            ));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
    }
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Serializes a matrix (column major) to the `SCAM` layout.
pub fn write_matrix(path: &Path, x: &DataMatrix) -> Result<()> {
    let n = x.n_dims();
    let m = x.n_points();
    let mut bytes = Vec::with_capacity(24 + 8 * n * m);
    bytes.extend_from_slice(MATRIX_MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    bytes.extend_from_slice(&(m as u64).to_le_bytes());
    for col in 0..m {
        for row in 0..n {
            bytes.extend_from_slice(&x.column(col)[row].to_le_bytes());
        }
    }
    write_file(path, &bytes)
}

/// Reads a `SCAM` file, checking magic, version, exact payload length,
/// and entry finiteness.
pub fn read_matrix(path: &Path) -> Result<DataMatrix> {
    let bytes = read_file(path)?;
    let mut c = Cursor::new(&bytes, path);
    c.expect_magic(MATRIX_MAGIC)?;
    c.expect_version()?;
    let dims_at = c.offset;
    let n = c.read_u64("n_dims")? as usize;
    let points_at = c.offset;
    let m = c.read_u64("n_points")? as usize;
    if n == 0 {
        return Err(c.fail(dims_at, "n_dims must be at least 1".into()));
    }
    if m == 0 {
        return Err(c.fail(points_at, "n_points must be at least 1".into()));
    }
    let payload = 8usize
        .checked_mul(n)
        .and_then(|b| b.checked_mul(m))
        .ok_or_else(|| c.fail(dims_at, format!("dimensions {n} x {m} overflow")))?;
    let body_at = c.offset;
    if bytes.len() - body_at != payload {
        return Err(c.fail(
            body_at,
            format!(
                "payload length mismatch: expected exactly {payload} bytes for {n} x {m}, file has {}",
                bytes.len() - body_at
            ),
        ));
    }
    let mut values = DMatrix::zeros(n, m);
    for col in 0..m {
        for row in 0..n {
            let at = c.offset;
            let v = c.read_f64("matrix entry")?;
            if !v.is_finite() {
                return Err(c.fail(at, format!("non-finite matrix entry {v}")));
            }
            values[(row, col)] = v;
        }
    }
    c.expect_end()?;
    Ok(DataMatrix::new(values)?)
}

/// Serializes sparse codes to the `SCAC` layout.
pub fn write_codes(path: &Path, code_len: usize, codes: &[SparseCode]) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CODES_MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(code_len as u64).to_le_bytes());
    bytes.extend_from_slice(&(codes.len() as u64).to_le_bytes());
    for code in codes {
        bytes.extend_from_slice(&(code.nnz() as u32).to_le_bytes());
        for &(idx, val) in code.entries() {
            bytes.extend_from_slice(&(idx as u32).to_le_bytes());
            bytes.extend_from_slice(&val.to_le_bytes());
        }
    }
    write_file(path, &bytes)
}

/// Reads a `SCAC` file, enforcing strictly increasing in-range indices
/// and nonzero finite values. An empty code list is format-legal; callers
/// that need data raise their own error.
pub fn read_codes(path: &Path) -> Result<(usize, Vec<SparseCode>)> {
    let bytes = read_file(path)?;
    let mut c = Cursor::new(&bytes, path);
    c.expect_magic(CODES_MAGIC)?;
    c.expect_version()?;
    let len_at = c.offset;
    let code_len = c.read_u64("code_len")? as usize;
    if code_len == 0 {
        return Err(c.fail(len_at, "code_len must be at least 1".into()));
    }
    let count = c.read_u64("code count")? as usize;
    let mut codes = Vec::with_capacity(count.min(1 << 20));
    for k in 0..count {
        let nnz_at = c.offset;
        let nnz = c.read_u32(&format!("nnz of code {k}"))? as usize;
        if nnz > code_len {
            return Err(c.fail(
                nnz_at,
                format!("code {k} claims {nnz} entries, more than code length {code_len}"),
            ));
        }
        let mut entries = Vec::with_capacity(nnz);
        let mut prev: Option<usize> = None;
        for e in 0..nnz {
            let idx_at = c.offset;
            let idx = c.read_u32(&format!("index {e} of code {k}"))? as usize;
            if idx >= code_len {
                return Err(c.fail(
                    idx_at,
                    format!("code {k} index {idx} out of range for code length {code_len}"),
                ));
            }
            if let Some(p) = prev {
                if idx <= p {
                    return Err(c.fail(
                        idx_at,
                        format!("code {k} indices must be strictly increasing, saw {p} then {idx}"),
                    ));
                }
            }
            prev = Some(idx);
            let val_at = c.offset;
            let val = c.read_f64(&format!("value {e} of code {k}"))?;
            if val == 0.0 || !val.is_finite() {
                return Err(c.fail(
                    val_at,
                    format!("code {k} value must be nonzero and finite, got {val}"),
                ));
            }
            entries.push((idx, val));
        }
        codes.push(SparseCode::new(code_len, entries)?);
    }
    c.expect_end()?;
    Ok((code_len, codes))
}
