//! The `STNZ` model file: a key-value manifest followed by named tensors.
//!
//! ```text
//! "STNZ"  u32 version (= 1)
//! u64 manifest length, manifest bytes (UTF-8, one `key=value` per line)
//! u64 tensor count
//! per tensor: u64 name length, name bytes, u64 order, order × u64 dims,
//!             ∏dims × f32 values, first index fastest
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use stn_core::DenseTensor;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"STNZ";
pub const VERSION: u32 = 1;

/// Ordered `key=value` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, keeping its position if it already exists.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        debug_assert!(!key.contains(['=', '\n']) && !value.contains('\n'));
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut m = Self::new();
        for (n, line) in text.lines().enumerate() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("manifest line {} has no '='", n + 1))?;
            if m.get(k).is_some() {
                return Err(format!("manifest key {k} repeated"));
            }
            m.entries.push((k.to_string(), v.to_string()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelContainer {
    pub manifest: Manifest,
    pub tensors: Vec<(String, DenseTensor)>,
}

impl ModelContainer {
    pub fn tensor(&self, name: &str) -> Option<&DenseTensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let manifest = self.manifest.to_text();
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.order() as u64).to_le_bytes());
            for &d in t.dims() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let format = |msg: &str| CliError::Format {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        };
        let corrupt = |msg: String| CliError::Corrupt {
            path: path.to_path_buf(),
            msg,
        };
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(format("missing STNZ magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(format(&format!("unsupported version {version}")));
        }
        let mut r = Reader { bytes, pos: 8 };
        fn take<'a>(r: &mut Reader<'a>, n: u64, what: &str, path: &Path) -> Result<&'a [u8]> {
            r.take(n).ok_or_else(|| CliError::Corrupt {
                path: path.to_path_buf(),
                msg: format!("truncated {what}"),
            })
        }
        let manifest_len = r.u64().ok_or_else(|| corrupt("truncated header".into()))?;
        let text = take(&mut r, manifest_len, "manifest", path)?;
        let text = std::str::from_utf8(text).map_err(|_| format("manifest is not UTF-8"))?;
        let manifest = Manifest::parse(text).map_err(|m| format(&m))?;

        let count = r.u64().ok_or_else(|| corrupt("truncated tensor count".into()))?;
        let mut tensors: Vec<(String, DenseTensor)> = Vec::new();
        for i in 0..count {
            let name_len = r.u64().ok_or_else(|| corrupt(format!("truncated tensor {i}")))?;
            let name = take(&mut r, name_len, "tensor name", path)?;
            let name = String::from_utf8(name.to_vec()).map_err(|_| format("tensor name is not UTF-8"))?;
            if tensors.iter().any(|(n, _)| *n == name) {
                return Err(corrupt(format!("tensor {name} stored twice")));
            }
            let order = r.u64().ok_or_else(|| corrupt(format!("truncated header of {name}")))?;
            if order > 64 {
                return Err(corrupt(format!("tensor {name} claims order {order}")));
            }
            let mut dims = Vec::with_capacity(order as usize);
            for _ in 0..order {
                let d = r.u64().ok_or_else(|| corrupt(format!("truncated dims of {name}")))?;
                dims.push(usize::try_from(d).map_err(|_| corrupt(format!("dimension {d} too large")))?);
            }
            let len = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| corrupt(format!("dims {dims:?} of {name} overflow")))?;
            let raw = take(&mut r, len as u64, "tensor payload", path)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = DenseTensor::new(dims, data).map_err(|e| corrupt(format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { manifest, tensors })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: u64) -> Option<&'a [u8]> {
        let n = usize::try_from(n).ok()?;
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn save_model(path: &Path, container: &ModelContainer) -> Result<()> {
    std::fs::write(path, container.to_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelContainer> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    ModelContainer::from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelContainer {
        let mut manifest = Manifest::new();
        manifest.set("format", "test");
        manifest.set("note", "a=b");
        ModelContainer {
            manifest,
            tensors: vec![
                ("a".into(), DenseTensor::new(vec![2, 3], (0..6).map(|v| v as f32 * 0.5).collect()).unwrap()),
                ("b".into(), DenseTensor::new(vec![1], vec![f32::MIN_POSITIVE]).unwrap()),
            ],
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let back = ModelContainer::from_bytes(&c.to_bytes(), Path::new("x")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.manifest.get("note"), Some("a=b"));
        let empty = ModelContainer::default();
        assert_eq!(ModelContainer::from_bytes(&empty.to_bytes(), Path::new("x")).unwrap(), empty);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(ModelContainer::from_bytes(&bad, Path::new("x")), Err(CliError::Format { .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(ModelContainer::from_bytes(&bad, Path::new("x")), Err(CliError::Format { .. })));
        for cut in [10, bytes.len() - 1] {
            assert!(matches!(
                ModelContainer::from_bytes(&bytes[..cut], Path::new("x")),
                Err(CliError::Corrupt { .. })
            ));
        }
        let mut long = bytes;
        long.push(0);
        assert!(matches!(ModelContainer::from_bytes(&long, Path::new("x")), Err(CliError::Corrupt { .. })));
    }
}
