//! Binary checkpoint container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "TRXOSCKP"
//! 8       4     format version, u32 little-endian (currently 1)
//! 12      8     header length H in bytes, u64 little-endian
//! 20      H     UTF-8 JSON header: {"config": {...}, "step": n,
//!               "arrays": [{"name": "...", "shape": [...]}, ...]}
//! 20+H    ...   each array's elements in header order, row-major,
//!               f64 little-endian, no padding
//! ```
//!
//! Model weights use the names in [`PARAM_NAMES`]; other arrays (optimizer
//! moments) are carried alongside under their own names.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelParams, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"TRXOSCKP";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: u64,
    arrays: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Training steps completed when saved.
    pub step: u64,
    pub arrays: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, step: u64) -> Self {
        let arrays = model
            .params()
            .named()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        Self {
            config: model.config().clone(),
            step,
            arrays,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_model(&self) -> Result<Model> {
        let tensors = PARAM_NAMES
            .iter()
            .map(|name| {
                self.get(name)
                    .cloned()
                    .ok_or_else(|| Error::Contract(format!("checkpoint lacks array {name}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let params = ModelParams::from_tensors(&self.config, tensors)?;
        Model::new(self.config.clone(), params)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            step: self.step,
            arrays: self
                .arrays
                .iter()
                .map(|(name, t)| ArrayEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.arrays.iter().map(|(_, t)| t.len() * 8).sum();
        let mut out = Vec::with_capacity(20 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.arrays {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::format(origin, msg);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(20..20usize.saturating_add(header_len))
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| bad(&format!("header: {e}")))?;
        let mut cursor = 20 + header_len;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for entry in header.arrays {
            let n: usize = entry.shape.iter().product();
            let raw = bytes
                .get(cursor..cursor + n * 8)
                .ok_or_else(|| bad(&format!("truncated payload for {}", entry.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            cursor += n * 8;
            arrays.push((entry.name, Tensor::new(entry.shape, data)?));
        }
        if cursor != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            config: header.config,
            step: header.step,
            arrays,
        })
    }

    /// Writes atomically via a sibling temp file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Model {
        let cfg = ModelConfig {
            frames: 3,
            joints: 2,
            embed_dim: 4,
            query_dim: 2,
            key_dim: 2,
            value_dim: 3,
            disc_reduced_dim: 2,
            ..Default::default()
        };
        Model::init(cfg, 5).unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let mut ck = Checkpoint::from_model(&tiny(), 42);
        ck.arrays.push(("adam_m/psi_w1".into(), Tensor::vector(vec![-0.0, 1e-300, f64::MAX])));
        let back = Checkpoint::from_bytes(&ck.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back.step, 42);
        assert_eq!(back.to_model().unwrap(), tiny());
        let extra = back.get("adam_m/psi_w1").unwrap();
        assert_eq!(extra.data()[0].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn layout_starts_with_magic_and_version() {
        let bytes = Checkpoint::from_model(&tiny(), 0).to_bytes();
        assert_eq!(&bytes[..8], b"TRXOSCKP");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = Checkpoint::from_model(&tiny(), 0).to_bytes();
        let p = Path::new("x");
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], p).is_err());
        assert!(Checkpoint::from_bytes(b"NOTACKPT00000000000000", p).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, p).is_err());
    }
}
