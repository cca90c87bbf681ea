//! Named parameter arrays and the checkpoint container.
//!
//! Container layout: 8-byte magic `SKLTCKP1`, little-endian `u64` header
//! length, UTF-8 JSON header, then every array as contiguous little-endian
//! IEEE-754 `f32` values at the byte offset (relative to the data section)
//! recorded in the header.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};

use crate::decoder::{decoder_tensors, decoder_tensors_mut, DecoderParams};
use crate::encoder::{encoder_tensors, encoder_tensors_mut, EncoderParams};
use crate::error::{Error, Result};

/// Every trainable array of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl ParameterStore {
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = encoder_tensors(&self.encoder, "encoder");
        out.extend(decoder_tensors(&self.decoder, "decoder"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = encoder_tensors_mut(&mut self.encoder, "encoder");
        out.extend(decoder_tensors_mut(&mut self.decoder, "decoder"));
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn fill(&mut self, value: f64) {
        for (_, mut t) in self.tensors_mut() {
            t.fill(value);
        }
    }

    pub fn total(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Applies `f(param, other)` elementwise over matching arrays.
    pub fn zip_apply(&mut self, other: &ParameterStore, mut f: impl FnMut(&mut f64, f64)) {
        let others = other.tensors();
        for ((_, mut mine), (_, theirs)) in self.tensors_mut().into_iter().zip(others) {
            mine.zip_mut_with(&theirs, |a, &b| f(a, b));
        }
    }

    /// Rounds every value to the nearest `f32`, matching what a checkpoint stores.
    pub fn quantize_f32(&mut self) {
        for (_, mut t) in self.tensors_mut() {
            t.mapv_inplace(|v| v as f32 as f64);
        }
    }

    /// Copies arrays by name from `arrays`, checking shapes. Every array of the
    /// store must be present.
    pub fn load_from(&mut self, arrays: &BTreeMap<String, (Vec<usize>, Vec<f32>)>, prefix: &str) -> Result<()> {
        for (name, mut view) in self.tensors_mut() {
            let key = format!("{prefix}{name}");
            let (shape, data) = arrays
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing array {key}")))?;
            if shape.as_slice() != view.shape() {
                return Err(Error::Checkpoint(format!(
                    "array {key} has shape {shape:?}, expected {:?}",
                    view.shape()
                )));
            }
            for (dst, &src) in view.iter_mut().zip(data) {
                *dst = src as f64;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the data section.
    pub offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContainerHeader {
    /// Free-form metadata (model configuration, iteration counters).
    pub meta: serde_json::Value,
    pub arrays: Vec<ArrayEntry>,
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SKLTCKP1";

/// In-memory form of a checkpoint: metadata plus named `f32` arrays.
#[derive(Clone, Debug, Default)]
pub struct Container {
    pub meta: serde_json::Value,
    pub arrays: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
    /// Insertion order, kept so files are byte-stable.
    order: Vec<String>,
}

impl Container {
    pub fn new(meta: serde_json::Value) -> Self {
        Container { meta, arrays: BTreeMap::new(), order: Vec::new() }
    }

    pub fn insert<'a>(&mut self, name: String, values: impl IntoIterator<Item = &'a f64>, shape: Vec<usize>) {
        let data: Vec<f32> = values.into_iter().map(|&v| v as f32).collect();
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        if self.arrays.insert(name.clone(), (shape, data)).is_none() {
            self.order.push(name);
        }
    }

    pub fn insert_store(&mut self, store: &ParameterStore, prefix: &str) {
        for (name, view) in store.tensors() {
            let shape = view.shape().to_vec();
            self.insert(format!("{prefix}{name}"), view.iter(), shape);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::with_capacity(self.order.len());
        let mut offset = 0u64;
        for name in &self.order {
            let (shape, data) = &self.arrays[name];
            entries.push(ArrayEntry { name: name.clone(), shape: shape.clone(), offset });
            offset += 4 * data.len() as u64;
        }
        let header = ContainerHeader { meta: self.meta.clone(), arrays: entries };
        let header_bytes = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header_bytes.len() + offset as usize);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        for name in &self.order {
            for v in &self.arrays[name].1 {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Container> {
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let data_start = 16usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        let header: ContainerHeader = serde_json::from_slice(&bytes[16..data_start])
            .map_err(|e| Error::Checkpoint(format!("header JSON: {e}")))?;
        let data = &bytes[data_start..];
        let mut container = Container::new(header.meta);
        for entry in header.arrays {
            let n: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let end = start + 4 * n;
            let chunk = data
                .get(start..end)
                .ok_or_else(|| Error::Checkpoint(format!("array {} runs past end of file", entry.name)))?;
            let values = chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            container.arrays.insert(entry.name.clone(), (entry.shape, values));
            container.order.push(entry.name);
        }
        Ok(container)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let wrap = |source| Error::CheckpointWriteFailure { path: path.display().to_string(), source };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(wrap)?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(wrap)?;
        f.write_all(&self.to_bytes()).map_err(wrap)?;
        f.sync_all().map_err(wrap)?;
        fs::rename(&tmp, path).map_err(wrap)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Container> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?
            .read_to_end(&mut bytes)?;
        Container::from_bytes(&bytes)
    }

    pub fn array(&self, name: &str) -> Option<&(Vec<usize>, Vec<f32>)> {
        self.arrays.get(name)
    }
}
