//! safetensors-compatible tensor archive.
//!
//! Layout: `u64` little-endian header length `N`, then `N` bytes of JSON
//! mapping tensor names to `{dtype, shape, data_offsets: [begin, end)}` with
//! offsets relative to the first data byte, then the raw data. Writes emit
//! entries in lexicographic name order with contiguous offsets and no padding.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Map, Value};

use super::bf16::{bf16_to_f32, f32_to_bf16};
use crate::error::{Error, Result};
use crate::tensor::DataKind;

const METADATA_KEY: &str = "__metadata__";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub kind: DataKind,
    pub shape: Vec<usize>,
    /// Raw little-endian element bytes.
    pub bytes: Vec<u8>,
}

impl TensorEntry {
    pub fn new(kind: DataKind, shape: Vec<usize>, bytes: Vec<u8>) -> Result<Self> {
        let expected = shape.iter().product::<usize>() * kind.size_bytes();
        if bytes.len() != expected {
            return Err(Error::Archive(format!(
                "{} tensor of shape {shape:?} needs {expected} bytes, got {}",
                kind.as_str(),
                bytes.len()
            )));
        }
        Ok(Self { kind, shape, bytes })
    }

    pub fn from_f32(kind: DataKind, shape: Vec<usize>, values: &[f32]) -> Result<Self> {
        let bytes = match kind {
            DataKind::F32 => values.iter().flat_map(|v| v.to_le_bytes()).collect(),
            DataKind::BF16 => values
                .iter()
                .flat_map(|&v| f32_to_bf16(v).to_le_bytes())
                .collect(),
        };
        Self::new(kind, shape, bytes)
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Values widened to f32.
    pub fn to_f32(&self) -> Vec<f32> {
        match self.kind {
            DataKind::F32 => self
                .bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
            DataKind::BF16 => self
                .bytes
                .chunks_exact(2)
                .map(|c| bf16_to_f32(u16::from_le_bytes([c[0], c[1]])))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorArchive {
    entries: BTreeMap<String, TensorEntry>,
    /// The `__metadata__` header value, kept verbatim.
    pub metadata: Option<Value>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor; a name already present is rejected.
    pub fn insert(&mut self, name: impl Into<String>, entry: TensorEntry) -> Result<()> {
        let name = name.into();
        if name == METADATA_KEY {
            return Err(Error::Archive(format!("{METADATA_KEY} is reserved")));
        }
        if self.entries.contains_key(&name) {
            return Err(Error::Archive(format!("duplicate tensor name {name:?}")));
        }
        self.entries.insert(name, entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TensorEntry> {
        self.entries.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<TensorEntry> {
        self.entries.remove(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in lexicographic name order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &TensorEntry)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = Map::new();
        if let Some(meta) = &self.metadata {
            header.insert(METADATA_KEY.to_string(), meta.clone());
        }
        let mut offset = 0usize;
        for (name, entry) in &self.entries {
            let end = offset + entry.bytes.len();
            header.insert(
                name.clone(),
                json!({
                    "dtype": entry.kind.as_str(),
                    "shape": entry.shape,
                    "data_offsets": [offset, end],
                }),
            );
            offset = end;
        }
        let header_bytes = serde_json::to_vec(&Value::Object(header))?;
        let mut out = Vec::with_capacity(8 + header_bytes.len() + offset);
        out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        for entry in self.entries.values() {
            out.extend_from_slice(&entry.bytes);
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < 8 {
            return Err(Error::Truncated(format!(
                "{} bytes is shorter than the 8-byte header length",
                buf.len()
            )));
        }
        let n = u64::from_le_bytes(buf[..8].try_into().expect("8 bytes"));
        let data_start = usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_add(8))
            .filter(|&end| end <= buf.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "header length {n} runs past end of {}-byte file",
                    buf.len()
                ))
            })?;
        let header: Value = serde_json::from_slice(&buf[8..data_start])
            .map_err(|e| Error::Archive(format!("header is not valid JSON: {e}")))?;
        let Value::Object(header) = header else {
            return Err(Error::Archive("header is not a JSON object".into()));
        };
        let data = &buf[data_start..];

        let mut archive = TensorArchive::new();
        let mut spans: Vec<(usize, usize, String)> = Vec::new();
        for (name, info) in header {
            if name == METADATA_KEY {
                archive.metadata = Some(info);
                continue;
            }
            let (kind, shape, begin, end) = parse_entry_info(&name, &info)?;
            if begin > end || end > data.len() {
                return Err(Error::Archive(format!(
                    "tensor {name:?} offsets [{begin}, {end}) out of bounds for {} data bytes",
                    data.len()
                )));
            }
            let entry = TensorEntry::new(kind, shape, data[begin..end].to_vec())
                .map_err(|e| Error::Archive(format!("tensor {name:?}: {e}")))?;
            spans.push((begin, end, name.clone()));
            archive.entries.insert(name, entry);
        }
        spans.sort();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::Archive(format!(
                    "tensors {:?} and {:?} overlap",
                    w[0].2, w[1].2
                )));
            }
        }
        Ok(archive)
    }
}

fn parse_entry_info(name: &str, info: &Value) -> Result<(DataKind, Vec<usize>, usize, usize)> {
    let err = |m: &str| Error::Archive(format!("tensor {name:?}: {m}"));
    let obj = info.as_object().ok_or_else(|| err("entry is not an object"))?;
    let dtype = obj
        .get("dtype")
        .and_then(Value::as_str)
        .ok_or_else(|| err("missing dtype"))?;
    let kind = DataKind::parse(dtype).ok_or_else(|| err(&format!("unknown dtype {dtype:?}")))?;
    let shape = obj
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| err("missing shape"))?
        .iter()
        .map(|d| d.as_u64().map(|d| d as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| err("shape must be a list of non-negative integers"))?;
    let offsets = obj
        .get("data_offsets")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 2)
        .ok_or_else(|| err("data_offsets must be [begin, end]"))?;
    let begin = offsets[0].as_u64().ok_or_else(|| err("bad begin offset"))? as usize;
    let end = offsets[1].as_u64().ok_or_else(|| err("bad end offset"))? as usize;
    Ok((kind, shape, begin, end))
}

pub fn read_archive(path: &Path) -> Result<TensorArchive> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    TensorArchive::from_bytes(&buf)
}

pub fn write_archive(archive: &TensorArchive, path: &Path) -> Result<()> {
    let bytes = archive.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
