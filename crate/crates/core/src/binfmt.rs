//! Shared container layout for episode and checkpoint files.
//!
//! ```text
//! magic (5 bytes)
//! u32 manifest length, manifest bytes (UTF-8 `key=value` lines)
//! u32 array count, then per array:
//!   u16 name length, name bytes
//!   u8 dtype (0 = f32, 1 = i32), u8 ndim, ndim × u32 extents
//!   product(extents) little-endian 4-byte values
//! ```
//! All integers are little-endian. Nothing may follow the last array.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    I32(Vec<i32>),
}

impl ArrayData {
    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn f32(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        NamedArray {
            name: name.into(),
            shape,
            data: ArrayData::F32(data),
        }
    }

    pub fn i32(name: impl Into<String>, shape: Vec<usize>, data: Vec<i32>) -> Self {
        NamedArray {
            name: name.into(),
            shape,
            data: ArrayData::I32(data),
        }
    }
}

/// Decoded file: manifest pairs in file order plus arrays in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub manifest: Vec<(String, String)>,
    pub arrays: Vec<NamedArray>,
}

impl Container {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.manifest.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn array(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }
}

pub fn encode(magic: &[u8; 5], manifest: &[(String, String)], arrays: &[NamedArray]) -> Vec<u8> {
    let mut text = String::new();
    for (k, v) in manifest {
        debug_assert!(!k.contains('=') && !k.contains('\n') && !v.contains('\n'));
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in arrays {
        out.extend_from_slice(&(a.name.len() as u16).to_le_bytes());
        out.extend_from_slice(a.name.as_bytes());
        out.push(match a.data {
            ArrayData::F32(_) => 0,
            ArrayData::I32(_) => 1,
        });
        out.push(a.shape.len() as u8);
        for &d in &a.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &a.data {
            ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::Corrupt {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.corrupt(format!("truncated while reading {what} at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8], magic: &[u8; 5], path: &Path) -> Result<Container> {
    let mut r = Reader {
        buf: bytes,
        pos: 0,
        path,
    };
    let m = r.take(5, "magic")?;
    if m != magic {
        return Err(r.corrupt(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(m),
            String::from_utf8_lossy(magic)
        )));
    }
    let n = r.u32("manifest length")? as usize;
    let text = r.take(n, "manifest")?;
    let text = std::str::from_utf8(text).map_err(|_| r.corrupt("manifest is not UTF-8"))?;
    let mut manifest = Vec::new();
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| r.corrupt(format!("manifest line `{line}` lacks `=`")))?;
        manifest.push((k.to_string(), v.to_string()));
    }
    let count = r.u32("array count")? as usize;
    let mut arrays = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let nl = r.u16("array name length")? as usize;
        let name = std::str::from_utf8(r.take(nl, "array name")?)
            .map_err(|_| r.corrupt("array name is not UTF-8"))?
            .to_string();
        let dtype = r.u8("dtype")?;
        let ndim = r.u8("ndim")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32("extent")? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| r.corrupt(format!("array {name} extents overflow")))?;
        let raw = r.take(
            len.checked_mul(4).ok_or_else(|| r.corrupt("array too large"))?,
            &format!("array {name}"),
        )?;
        let words = raw.chunks_exact(4).map(|c| <[u8; 4]>::try_from(c).expect("4 bytes"));
        let data = match dtype {
            0 => ArrayData::F32(words.map(f32::from_le_bytes).collect()),
            1 => ArrayData::I32(words.map(i32::from_le_bytes).collect()),
            d => return Err(r.corrupt(format!("array {name} has unknown dtype {d}"))),
        };
        arrays.push(NamedArray { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(r.corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Container { manifest, arrays })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (Vec<(String, String)>, Vec<NamedArray>) {
        (
            vec![("a".into(), "1".into()), ("b".into(), "x y".into())],
            vec![
                NamedArray::f32("w", vec![2, 2], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5]),
                NamedArray::i32("l", vec![3], vec![-1, 0, 7]),
            ],
        )
    }

    #[test]
    fn round_trip_is_exact() {
        let (m, a) = sample();
        let bytes = encode(b"TEST1", &m, &a);
        let c = decode(&bytes, b"TEST1", Path::new("x")).unwrap();
        assert_eq!(c.manifest, m);
        assert_eq!(c.arrays, a);
        assert_eq!(encode(b"TEST1", &c.manifest, &c.arrays), bytes);
    }

    #[test]
    fn every_truncation_is_detected() {
        let (m, a) = sample();
        let bytes = encode(b"TEST1", &m, &a);
        for cut in 0..bytes.len() {
            assert!(matches!(
                decode(&bytes[..cut], b"TEST1", Path::new("x")),
                Err(Error::Corrupt { .. })
            ));
        }
    }

    #[test]
    fn wrong_magic_and_trailing_bytes() {
        let (m, a) = sample();
        let mut bytes = encode(b"TEST1", &m, &a);
        assert!(decode(&bytes, b"OTHER", Path::new("x")).is_err());
        bytes.push(0);
        assert!(decode(&bytes, b"TEST1", Path::new("x")).is_err());
    }
}
