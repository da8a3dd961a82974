//! Binary checkpoint container.
//!
//! ```text
//! magic      8 bytes
//! version    u32
//! n_header   u32, then n_header × u32 (shape fields)
//! n_arrays   u32, then per array: len u64 + len × f64
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub magic: [u8; 8],
    pub header: Vec<u32>,
    pub arrays: Vec<Vec<f64>>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.header.len() as u32).to_le_bytes());
        for h in &self.header {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.len() as u64).to_le_bytes());
            for x in a {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 8] = r.take(8).ok_or_else(|| bad("truncated magic"))?.try_into().unwrap();
        let version = r.u32().ok_or_else(|| bad("truncated version"))?;
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let n_header = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let header = (0..n_header)
            .map(|_| r.u32())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("truncated header"))?;
        let n_arrays = r.u32().ok_or_else(|| bad("truncated array count"))? as usize;
        let mut arrays = Vec::with_capacity(n_arrays);
        for _ in 0..n_arrays {
            let len = r.u64().ok_or_else(|| bad("truncated array length"))? as usize;
            let raw = r
                .take(len.checked_mul(8).ok_or_else(|| bad("array too large"))?)
                .ok_or_else(|| bad("truncated array"))?;
            arrays.push(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Container {
            magic,
            header,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn expect_magic(&self, magic: &[u8; 8], path: &Path) -> Result<()> {
        if &self.magic != magic {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                reason: format!(
                    "expected {:?} checkpoint, found {:?}",
                    String::from_utf8_lossy(magic),
                    String::from_utf8_lossy(&self.magic)
                ),
            });
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_little_endian() {
        let c = Container {
            magic: *b"TESTCKPT",
            header: vec![3],
            arrays: vec![vec![1.5], vec![]],
        };
        let b = c.to_bytes();
        assert_eq!(&b[..8], b"TESTCKPT");
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..16], &1u32.to_le_bytes());
        assert_eq!(&b[16..20], &3u32.to_le_bytes());
        assert_eq!(&b[20..24], &2u32.to_le_bytes());
        assert_eq!(&b[24..32], &1u64.to_le_bytes());
        assert_eq!(&b[32..40], &1.5f64.to_le_bytes());
        assert_eq!(Container::from_bytes(&b, Path::new("x")).unwrap(), c);
        assert!(Container::from_bytes(&b[..b.len() - 1], Path::new("x")).is_err());
    }
}
