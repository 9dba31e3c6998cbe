//! Self-describing binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"TGMF"
//! version u32
//! kind    str                      str = u32 byte length + UTF-8
//! n_meta  u32, then n_meta × (key str, value str), keys sorted
//! n_tens  u32, then n_tens × (name str, ndim u32, dims u64 × ndim,
//!                             data f64 × prod(dims))
//! ```
//!
//! Nothing else follows the last tensor. Decoding then re-encoding any valid
//! container reproduces the exact input bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::matrix::Matrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TGMF";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Container {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<Tensor>,
}

impl Container {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            ..Default::default()
        }
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Model(format!("{} container lacks meta key {key:?}", self.kind)))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| Error::Model(format!("meta {key:?} has unparsable value {raw:?}")))
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn push_matrix(&mut self, name: impl Into<String>, m: &Matrix) {
        self.push(name, vec![m.rows(), m.cols()], m.as_slice().to_vec());
    }

    pub fn push_vec(&mut self, name: impl Into<String>, v: &[f64]) {
        self.push(name, vec![v.len()], v.to_vec());
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Model(format!("{} container lacks tensor {name:?}", self.kind)))
    }

    pub fn matrix(&self, name: &str) -> Result<Matrix> {
        let t = self.tensor(name)?;
        if t.shape.len() != 2 {
            return Err(Error::Model(format!("tensor {name:?} is not 2-D: {:?}", t.shape)));
        }
        Matrix::from_vec(t.shape[0], t.shape[1], t.data.clone())
    }

    pub fn vector(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        let t = self.tensor(name)?;
        if t.shape != [len] {
            return Err(Error::Model(format!(
                "tensor {name:?} has shape {:?}, expected [{len}]",
                t.shape
            )));
        }
        Ok(t.data.clone())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Model(format!("expected a {kind:?} model, found {:?}", self.kind)))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for d in &t.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Model("not a model container (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CONTAINER_VERSION {
            return Err(Error::Model(format!(
                "unsupported container version {version} (expected {CONTAINER_VERSION})"
            )));
        }
        let kind = r.string()?;
        let n_meta = r.u32()?;
        let mut meta = BTreeMap::new();
        let mut prev: Option<String> = None;
        for _ in 0..n_meta {
            let k = r.string()?;
            let v = r.string()?;
            if prev.as_ref().is_some_and(|p| *p >= k) {
                return Err(Error::Model("meta keys not strictly sorted".into()));
            }
            prev = Some(k.clone());
            meta.insert(k, v);
        }
        let n_tensors = r.u32()?;
        let mut tensors = Vec::with_capacity(n_tensors as usize);
        for _ in 0..n_tensors {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(*d))
                .ok_or_else(|| Error::Model(format!("tensor {name:?} shape overflows")))?;
            if count.saturating_mul(8) > r.remaining() {
                return Err(Error::Model(format!("tensor {name:?} truncated")));
            }
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")));
            }
            tensors.push(Tensor { name, shape, data });
        }
        if r.remaining() != 0 {
            return Err(Error::Model(format!("{} trailing bytes after last tensor", r.remaining())));
        }
        Ok(Self { kind, meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Model(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.at
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Model("model container truncated".into()));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Model("invalid UTF-8 in container".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_garbage_and_truncation() {
        assert!(Container::from_bytes(b"nope").is_err());
        let mut c = Container::new("test");
        c.push_vec("v", &[1.0, 2.0]);
        let bytes = c.to_bytes();
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Container::from_bytes(&extra).is_err());
        let mut wrong_version = bytes;
        wrong_version[4] = 9;
        assert!(Container::from_bytes(&wrong_version).is_err());
    }

    proptest! {
        #[test]
        fn byte_identical_round_trip(
            kind in "[a-z]{1,8}",
            meta in proptest::collection::btree_map("[a-z_]{1,6}", "[ -~]{0,12}", 0..5),
            tensors in proptest::collection::vec(
                (1usize..4, 0usize..4).prop_flat_map(|(r, c)| {
                    proptest::collection::vec(proptest::num::f64::ANY, r * c)
                        .prop_map(move |d| (r, c, d))
                }),
                0..4,
            ),
        ) {
            let mut c = Container::new(kind);
            c.meta = meta;
            for (i, (r, col, d)) in tensors.into_iter().enumerate() {
                c.push(format!("t{i}"), vec![r, col], d);
            }
            let bytes = c.to_bytes();
            let back = Container::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
