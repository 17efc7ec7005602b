//! Self-describing binary container used by dataset and checkpoint files.
//!
//! Layout: 4-byte magic, u32 format version, u64 header length, JSON header,
//! then a raw little-endian f32 payload. The header carries a kind tag,
//! kind-specific metadata and a tensor table (name, shape, byte offset/len),
//! so readers can refuse foreign or truncated files before touching the
//! payload.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DuetError, Result};

const MAGIC: &[u8; 4] = b"DUET";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    byte_len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// An in-memory container: kind tag, JSON metadata and named f32 tensors.
#[derive(Debug, Clone)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Container {
            kind: kind.into(),
            meta,
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        let name = name.into();
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}");
        self.tensors.insert(name, (shape, data));
    }

    pub fn get(&self, name: &str) -> Result<(&[usize], &[f32])> {
        self.tensors
            .get(name)
            .map(|(s, d)| (s.as_slice(), d.as_slice()))
            .ok_or_else(|| DuetError::FormatVersionMismatch(format!("missing tensor '{name}'")))
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for (name, (shape, data)) in &self.tensors {
            let byte_len = (data.len() * 4) as u64;
            entries.push(TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset,
                byte_len,
            });
            offset += byte_len;
        }
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: entries,
        };
        let header_bytes = serde_json::to_vec(&header)?;

        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        for (_, (_, data)) in &self.tensors {
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        read_exact_or_truncated(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(DuetError::FormatVersionMismatch(format!(
                "bad magic {magic:?}"
            )));
        }
        let mut v = [0u8; 4];
        read_exact_or_truncated(&mut r, &mut v)?;
        let version = u32::from_le_bytes(v);
        if version != FORMAT_VERSION {
            return Err(DuetError::FormatVersionMismatch(format!(
                "file version {version}, reader supports {FORMAT_VERSION}"
            )));
        }
        let mut l = [0u8; 8];
        read_exact_or_truncated(&mut r, &mut l)?;
        let header_len = u64::from_le_bytes(l) as usize;
        if header_len > 1 << 30 {
            return Err(DuetError::FormatVersionMismatch(format!(
                "implausible header length {header_len}"
            )));
        }
        let mut header_bytes = vec![0u8; header_len];
        read_exact_or_truncated(&mut r, &mut header_bytes)?;
        let header: Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| DuetError::FormatVersionMismatch(format!("bad header: {e}")))?;

        let total: u64 = header.tensors.iter().map(|t| t.byte_len).sum();
        let mut payload = vec![0u8; total as usize];
        read_exact_or_truncated(&mut r, &mut payload)?;

        let mut tensors = BTreeMap::new();
        for entry in header.tensors {
            let start = entry.offset as usize;
            let end = start + entry.byte_len as usize;
            if end > payload.len() || entry.byte_len % 4 != 0 {
                return Err(DuetError::FormatVersionMismatch(format!(
                    "tensor '{}' outside payload",
                    entry.name
                )));
            }
            let count = entry.byte_len as usize / 4;
            if entry.shape.iter().product::<usize>() != count {
                return Err(DuetError::FormatVersionMismatch(format!(
                    "tensor '{}' shape/payload disagree",
                    entry.name
                )));
            }
            let mut data = Vec::with_capacity(count);
            for chunk in payload[start..end].chunks_exact(4) {
                data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
            }
            tensors.insert(entry.name, (entry.shape, data));
        }
        Ok(Container {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }
}

fn read_exact_or_truncated(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            DuetError::FormatVersionMismatch("file truncated".into())
        } else {
            DuetError::Io(e)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.duet");
        let mut c = Container::new("test", serde_json::json!({"x": 1}));
        let data = vec![0.0f32, -1.5, f32::MIN_POSITIVE, 1e30, -0.0];
        c.insert("a", vec![5], data.clone());
        c.save(&path).unwrap();
        let back = Container::load(&path).unwrap();
        assert_eq!(back.kind, "test");
        let (shape, got) = back.get("a").unwrap();
        assert_eq!(shape, &[5]);
        for (x, y) in data.iter().zip(got) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.duet");
        let mut c = Container::new("test", serde_json::json!({}));
        c.insert("a", vec![64], vec![1.0; 64]);
        c.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [3, 7, 12, bytes.len() / 2, bytes.len() - 1] {
            let p = dir.path().join(format!("cut{cut}.duet"));
            std::fs::write(&p, &bytes[..cut]).unwrap();
            match Container::load(&p) {
                Err(DuetError::FormatVersionMismatch(_)) | Err(DuetError::Io(_)) => {}
                other => panic!("cut at {cut}: expected failure, got {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.duet");
        Container::new("test", serde_json::json!({}))
            .save(&path)
            .unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            Container::load(&path),
            Err(DuetError::FormatVersionMismatch(_))
        ));
    }
}
