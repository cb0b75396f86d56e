//! Checkpoint serialization.
//!
//! Layout: the magic bytes `APTCKPT1`, a little-endian u64 header length,
//! a JSON header (format version, tensor names/shapes/dtypes/frozen
//! flags, training metadata), then each tensor's raw little-endian f32
//! data concatenated in header order. Save→load round-trips bitwise.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::grad::Tensor;

use super::ModelError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"APTCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub seed: u64,
    pub epoch: usize,
    /// Class ids backing a classifier head, in logit order. Empty for
    /// models without one.
    #[serde(default)]
    pub class_ids: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub version: u32,
    pub tensors: Vec<NamedTensor>,
    pub meta: CheckpointMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderTensor {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    frozen: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    tensors: Vec<HeaderTensor>,
    meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Result<&NamedTensor, ModelError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ModelError::MissingTensor(name.to_string()))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), ModelError> {
    let header = Header {
        version: ckpt.version,
        tensors: ckpt
            .tensors
            .iter()
            .map(|t| HeaderTensor {
                name: t.name.clone(),
                shape: t.tensor.shape().to_vec(),
                dtype: "f32".into(),
                frozen: t.frozen,
            })
            .collect(),
        meta: ckpt.meta.clone(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(CHECKPOINT_MAGIC)?;
    file.write_all(&(header_json.len() as u64).to_le_bytes())?;
    file.write_all(&header_json)?;
    for t in &ckpt.tensors {
        for &v in t.tensor.data() {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    file.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic).map_err(|_| corrupt("missing magic"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes).map_err(|_| corrupt("missing header length"))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    if header_len > 16 << 20 {
        return Err(corrupt("implausible header length"));
    }
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json).map_err(|_| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&header_json).map_err(|_| corrupt("unparseable header"))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(ModelError::VersionMismatch { got: header.version, want: CHECKPOINT_VERSION });
    }

    let mut tensors = Vec::with_capacity(header.tensors.len());
    for ht in header.tensors {
        if ht.dtype != "f32" {
            return Err(corrupt("unsupported dtype"));
        }
        let numel: usize = ht.shape.iter().product();
        let mut raw = vec![0u8; numel * 4];
        file.read_exact(&mut raw).map_err(|_| corrupt("truncated tensor data"))?;
        let data: Vec<f32> =
            raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        let tensor = Tensor::new(&ht.shape, data).map_err(|_| corrupt("tensor shape mismatch"))?;
        tensors.push(NamedTensor { name: ht.name, tensor, frozen: ht.frozen });
    }
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing)? != 0 {
        return Err(corrupt("trailing bytes after tensor data"));
    }
    Ok(Checkpoint { version: header.version, tensors, meta: header.meta })
}

fn corrupt(why: &str) -> ModelError {
    ModelError::Corrupt(why.to_string())
}
