//! Little-endian primitives shared by the binary file formats.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// FNV-1a over a byte stream.
#[derive(Debug, Clone, Copy)]
pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv64 {
    pub fn update(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(b);
        self
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn vector(&mut self, v: &DVector<f64>) -> &mut Self {
        for x in v.iter() {
            self.f64(*x);
        }
        self
    }

    /// Row-major dump of a matrix.
    pub fn matrix(&mut self, m: &DMatrix<f64>) -> &mut Self {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)]);
            }
        }
        self
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.buf).map_err(|e| Error::io(path, e))
    }
}

/// Cursor over an in-memory file image; every short read is a truncation error.
#[derive(Debug)]
pub struct Reader<'a> {
    path: PathBuf,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(path: impl Into<PathBuf>, data: &'a [u8]) -> Self {
        Self {
            path: path.into(),
            data,
            pos: 0,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                path: self.path.clone(),
                expected: (self.pos + n) as u64,
                actual: self.data.len() as u64,
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let found = self.take(4).map_err(|_| Error::BadMagic {
            path: self.path.clone(),
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(&self.data[self.pos..]).into_owned(),
        })?;
        if found != expected {
            return Err(Error::BadMagic {
                path: self.path.clone(),
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    /// Reads a `u32` version field and rejects anything but `supported`.
    pub fn version(&mut self, format: &'static str, supported: u32) -> Result<()> {
        let version = self.u32()?;
        if version != supported {
            return Err(Error::UnsupportedVersion {
                path: self.path.clone(),
                format,
                version,
            });
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::InvalidArgument(format!("size {v} overflows usize")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn vector(&mut self, n: usize) -> Result<DVector<f64>> {
        self.ensure(n.saturating_mul(8))?;
        let mut v = DVector::zeros(n);
        for x in v.iter_mut() {
            *x = self.f64()?;
        }
        Ok(v)
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        self.ensure(rows.saturating_mul(cols).saturating_mul(8))?;
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(m)
    }

    fn ensure(&self, n: usize) -> Result<()> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                path: self.path.clone(),
                expected: self.pos.saturating_add(n) as u64,
                actual: self.data.len() as u64,
            });
        }
        Ok(())
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference() {
        let mut h = Fnv64::default();
        h.update(b"a");
        assert_eq!(h.finish(), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn short_read_is_truncation() {
        let data = [1u8, 2, 3];
        let mut r = Reader::new("mem", &data);
        assert!(matches!(r.u64(), Err(Error::Truncated { .. })));
    }
}
