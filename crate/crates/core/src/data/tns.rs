//! `TNS1` named-tensor container.
//!
//! Little-endian layout: the magic `TNS1`, a `u32` entry count, then per
//! entry a `u32` name length, the UTF-8 name, a `u32` rank, `rank` × `u32`
//! dimensions and the `f32` payload in row-major order. Entries are written
//! in key order.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type TensorMap = BTreeMap<String, Tensor<f32>>;

const MAGIC: &[u8; 4] = b"TNS1";

pub fn encode_tns(map: &TensorMap) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(map.len() as u32).to_le_bytes());
    for (name, t) in map {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                field,
                format!("truncated: need {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }
}

pub fn decode_tns(bytes: &[u8]) -> Result<TensorMap> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic").ok() != Some(&MAGIC[..]) {
        return Err(Error::parse("magic", "unsupported magic (expected TNS1)"));
    }
    let count = r.u32("entry count")?;
    let mut map = TensorMap::new();
    for e in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::parse("name", format!("entry {e} name is not UTF-8")))?
            .to_string();
        let ndim = r.u32(&format!("{name}: rank"))? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32(&format!("{name}: dims"))? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| Error::parse(format!("{name}: dims"), "element count overflows"))?;
        let raw = r.take(n * 4, &format!("{name}: payload"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| Error::parse(format!("{name}: dims"), e.to_string()))?;
        if map.insert(name.clone(), t).is_some() {
            return Err(Error::parse("name", format!("duplicate entry {name:?}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::parse("payload", "trailing bytes after last entry"));
    }
    Ok(map)
}

pub fn save_tns(path: &Path, map: &TensorMap) -> Result<()> {
    std::fs::write(path, encode_tns(map))?;
    Ok(())
}

pub fn load_tns(path: &Path) -> Result<TensorMap> {
    decode_tns(&std::fs::read(path)?)
}
