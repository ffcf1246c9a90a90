use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::write_atomic;

pub const MAGIC: &[u8; 4] = b"EMB1";

/// A square patch of a corpus image: top-left `(y, x)` and side `size`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchRef {
    pub image_id: String,
    pub y: usize,
    pub x: usize,
    pub size: usize,
}

impl PatchRef {
    pub fn new(image_id: impl Into<String>, y: usize, x: usize, size: usize) -> Self {
        Self {
            image_id: image_id.into(),
            y,
            x,
            size,
        }
    }

    /// Center in image pixels as `(x, y)`.
    pub fn center(&self) -> [f64; 2] {
        let h = self.size as f64 / 2.0;
        [self.x as f64 + h, self.y as f64 + h]
    }
}

impl fmt::Display for PatchRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.image_id, self.y, self.x, self.size)
    }
}

impl FromStr for PatchRef {
    type Err = Error;
    /// Parses `image_id:y:x:size`; the id itself may contain colons.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("patch ref {s:?} is not image_id:y:x:size"));
        let mut parts = s.rsplitn(4, ':');
        let size = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let x = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let y = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let id = parts.next().filter(|v| !v.is_empty()).ok_or_else(bad)?;
        Ok(Self::new(id, y, x, size))
    }
}

/// Fixed-width vectors keyed by patch, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    refs: Vec<PatchRef>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            refs: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, patch: PatchRef, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "vector of {} for table dim {}",
                vector.len(),
                self.dim
            )));
        }
        if !vector.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite embedding for {patch}")));
        }
        self.refs.push(patch);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn patch(&self, i: usize) -> &PatchRef {
        &self.refs[i]
    }

    pub fn patches(&self) -> &[PatchRef] {
        &self.refs
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, patch: &PatchRef) -> Option<usize> {
        self.refs.iter().position(|r| r == patch)
    }

    /// `EMB1`, `u32` dim, `u64` count, then per row a `u32`-length-prefixed
    /// UTF-8 patch ref and `dim` little-endian `f32`s.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (i, r) in self.refs.iter().enumerate() {
            let s = r.to_string();
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
            for v in self.vector(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        fn take<'a>(cur: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
            if cur.len() < n {
                return Err(Error::Format("truncated embedding table".into()));
            }
            let (h, t) = cur.split_at(n);
            *cur = t;
            Ok(h)
        }
        let mut cur = bytes;
        let cur = &mut cur;
        if take(cur, 4)? != MAGIC {
            return Err(Error::Format("not an EMB1 table".into()));
        }
        let dim = u32::from_le_bytes(take(cur, 4)?.try_into().expect("4")) as usize;
        let count = u64::from_le_bytes(take(cur, 8)?.try_into().expect("8")) as usize;
        let mut table = Self::new(dim);
        let mut vec = vec![0f32; dim];
        for _ in 0..count {
            let len = u32::from_le_bytes(take(cur, 4)?.try_into().expect("4")) as usize;
            let s = std::str::from_utf8(take(cur, len)?).map_err(|_| Error::Format("patch ref is not UTF-8".into()))?;
            let r: PatchRef = s.parse()?;
            for (v, c) in vec.iter_mut().zip(take(cur, dim * 4)?.chunks_exact(4)) {
                *v = f32::from_le_bytes(c.try_into().expect("4"));
            }
            table.push(r, &vec)?;
        }
        if !cur.is_empty() {
            return Err(Error::Format("trailing bytes after embedding table".into()));
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}
