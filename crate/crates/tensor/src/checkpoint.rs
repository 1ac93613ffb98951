//! Named-tensor checkpoints.
//!
//! Wire format (all little-endian):
//!   magic "MFVC" | u32 version=1 | u32 tensor_count
//!   per tensor: u16 name_len | name bytes (UTF-8) | u8 dtype (0=f32, 1=f64)
//!               | u8 ndim | ndim × u32 dims | raw element data
//!
//! A JSON sidecar (`<path>.json`) records config, RNG seeds and optional
//! fingerprints of upstream checkpoints.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::element::{Dtype, Element};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MFVC";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error("missing tensor {0}")]
    Missing(String),
    #[error("dtype mismatch for {name}: stored {stored:?}, requested {requested:?}")]
    Dtype {
        name: String,
        stored: Dtype,
        requested: Dtype,
    },
    #[error("shape mismatch for {name}: stored {stored:?}, expected {expected:?}")]
    Shape {
        name: String,
        stored: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("sidecar error: {0}")]
    Sidecar(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone)]
pub struct StoredTensor {
    pub dtype: Dtype,
    pub dims: Vec<usize>,
    pub bytes: Vec<u8>,
}

/// Ordered name → tensor table. Insertion order is the serialization order,
/// which keeps writes byte-reproducible.
#[derive(Debug, Default, Clone)]
pub struct TensorStore {
    entries: Vec<(String, StoredTensor)>,
}

impl TensorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| n == name)
    }

    pub fn insert_raw(&mut self, name: &str, stored: StoredTensor) {
        if let Some(slot) = self.entries.iter_mut().find(|(n, _)| n == name) {
            slot.1 = stored;
        } else {
            self.entries.push((name.to_string(), stored));
        }
    }

    pub fn insert<E: Element>(&mut self, name: &str, tensor: &Tensor<E>) {
        let mut bytes = Vec::with_capacity(tensor.numel() * E::DTYPE.byte_width());
        for &v in tensor.value().iter() {
            v.write_le(&mut bytes);
        }
        self.insert_raw(
            name,
            StoredTensor {
                dtype: E::DTYPE,
                dims: tensor.shape().to_vec(),
                bytes,
            },
        );
    }

    pub fn get_raw(&self, name: &str) -> Result<&StoredTensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }

    pub fn get<E: Element>(&self, name: &str) -> Result<(Vec<usize>, Vec<E>)> {
        let stored = self.get_raw(name)?;
        if stored.dtype != E::DTYPE {
            return Err(CheckpointError::Dtype {
                name: name.to_string(),
                stored: stored.dtype,
                requested: E::DTYPE,
            });
        }
        let width = stored.dtype.byte_width();
        let data = stored
            .bytes
            .chunks_exact(width)
            .map(E::read_le)
            .collect::<Vec<E>>();
        Ok((stored.dims.clone(), data))
    }

    /// Copy a stored tensor into an existing parameter, enforcing shape.
    pub fn load_into<E: Element>(&self, name: &str, target: &Tensor<E>) -> Result<()> {
        let (dims, data) = self.get::<E>(name)?;
        if dims != target.shape() {
            return Err(CheckpointError::Shape {
                name: name.to_string(),
                stored: dims,
                expected: target.shape().to_vec(),
            });
        }
        target.value_mut().copy_from_slice(&data);
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dtype.code());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&t.bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = std::io::Cursor::new(bytes);
        let mut magic = [0u8; 4];
        cur.read_exact(&mut magic)
            .map_err(|_| CheckpointError::Format("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(CheckpointError::Format(format!(
                "bad magic {:?}, expected {:?}",
                magic, MAGIC
            )));
        }
        let mut u32buf = [0u8; 4];
        cur.read_exact(&mut u32buf)
            .map_err(|_| CheckpointError::Format("truncated version".into()))?;
        let version = u32::from_le_bytes(u32buf);
        if version != VERSION {
            return Err(CheckpointError::Format(format!(
                "unsupported version {version}"
            )));
        }
        cur.read_exact(&mut u32buf)
            .map_err(|_| CheckpointError::Format("truncated tensor count".into()))?;
        let count = u32::from_le_bytes(u32buf);
        let mut store = TensorStore::new();
        for _ in 0..count {
            let mut u16buf = [0u8; 2];
            cur.read_exact(&mut u16buf)
                .map_err(|_| CheckpointError::Format("truncated name length".into()))?;
            let name_len = u16::from_le_bytes(u16buf) as usize;
            let mut name_bytes = vec![0u8; name_len];
            cur.read_exact(&mut name_bytes)
                .map_err(|_| CheckpointError::Format("truncated name".into()))?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| CheckpointError::Format("tensor name is not UTF-8".into()))?;
            let mut byte = [0u8; 1];
            cur.read_exact(&mut byte)
                .map_err(|_| CheckpointError::Format("truncated dtype".into()))?;
            let dtype = Dtype::from_code(byte[0])
                .ok_or_else(|| CheckpointError::Format(format!("unknown dtype {}", byte[0])))?;
            cur.read_exact(&mut byte)
                .map_err(|_| CheckpointError::Format("truncated ndim".into()))?;
            let ndim = byte[0] as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                cur.read_exact(&mut u32buf)
                    .map_err(|_| CheckpointError::Format("truncated dims".into()))?;
                dims.push(u32::from_le_bytes(u32buf) as usize);
            }
            let numel: usize = dims.iter().product();
            let mut data = vec![0u8; numel * dtype.byte_width()];
            cur.read_exact(&mut data)
                .map_err(|_| CheckpointError::Format(format!("truncated data for {name}")))?;
            store.insert_raw(
                &name,
                StoredTensor {
                    dtype,
                    dims,
                    bytes: data,
                },
            );
        }
        if cur.position() != bytes.len() as u64 {
            return Err(CheckpointError::Format("trailing bytes".into()));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 over the canonical serialized bytes; used as a weight
    /// fingerprint to detect mismatched checkpoint loading downstream.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Companion metadata written next to the binary checkpoint.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Sidecar {
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fingerprints: BTreeMap<String, String>,
}

impl Sidecar {
    pub fn path_for(ckpt_path: &Path) -> std::path::PathBuf {
        let mut os = ckpt_path.as_os_str().to_os_string();
        os.push(".json");
        std::path::PathBuf::from(os)
    }

    pub fn save(&self, ckpt_path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(Self::path_for(ckpt_path), json)?;
        Ok(())
    }

    pub fn load(ckpt_path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(Self::path_for(ckpt_path))?;
        Ok(serde_json::from_str(&json)?)
    }
}
