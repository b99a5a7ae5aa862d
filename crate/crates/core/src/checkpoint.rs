//! Model checkpoints: a JSON manifest next to a little-endian `f32` blob.
//!
//! The manifest records the model config, every tensor's name, shape and
//! byte offset, the epoch counter, the experiment spec and, optionally, the
//! optimizer accumulators (stored in the same blob under `opt.` names).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::edge_gnn::{init_params, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ModelConfig,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub epoch: usize,
    #[serde(default)]
    pub spec: serde_json::Value,
    pub tensors: BTreeMap<String, TensorEntry>,
    /// Names of optimizer tensors, in parameter order.
    #[serde(default)]
    pub optimizer: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    /// Epochs completed when the checkpoint was taken.
    pub epoch: usize,
    pub spec: serde_json::Value,
    /// RMSProp accumulators aligned with the parameter tensors.
    pub opt_state: Option<Vec<Tensor<f32>>>,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

impl Checkpoint {
    pub fn new(params: ModelParams<f32>) -> Self {
        Self {
            params,
            epoch: 0,
            spec: serde_json::Value::Null,
            opt_state: None,
        }
    }

    /// Writes `path` (manifest) and `path` with a `.bin` extension (blob).
    pub fn save(&self, path: &Path) -> Result<()> {
        let blob_file = blob_path(path);
        let blob_name = blob_file
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Checkpoint(format!("bad checkpoint path {}", path.display())))?
            .to_string();

        let mut named: Vec<(String, &Tensor<f32>)> = self.params.named_tensors();
        let mut optimizer = Vec::new();
        if let Some(acc) = &self.opt_state {
            if acc.len() != named.len() {
                return Err(Error::Checkpoint(format!(
                    "{} optimizer tensors for {} parameters",
                    acc.len(),
                    named.len()
                )));
            }
            let opt: Vec<(String, &Tensor<f32>)> = named
                .iter()
                .zip(acc)
                .map(|((name, _), t)| (format!("opt.{name}"), t))
                .collect();
            optimizer = opt.iter().map(|(n, _)| n.clone()).collect();
            named.extend(opt);
        }

        let mut blob = Vec::new();
        let mut tensors = BTreeMap::new();
        for (name, t) in named {
            tensors.insert(
                name,
                TensorEntry {
                    shape: t.shape().to_vec(),
                    offset: blob.len(),
                },
            );
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            config: self.params.config.clone(),
            blob: blob_name,
            epoch: self.epoch,
            spec: self.spec.clone(),
            tensors,
            optimizer,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(&blob_file, &blob)?;
        fs::write(path, serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(path)?)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }
        let blob_file = path.with_file_name(&manifest.blob);
        let blob = fs::read(&blob_file)?;
        let read = |name: &str| -> Result<Tensor<f32>> {
            let entry = manifest
                .tensors
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            let len: usize = entry.shape.iter().product();
            let bytes = blob
                .get(entry.offset..entry.offset + 4 * len)
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name} runs past the blob")))?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Tensor::new(entry.shape.clone(), data)
        };

        let mut params: ModelParams<f32> = init_params(&manifest.config, 0)?;
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, slot) in names.iter().zip(params.tensors_mut()) {
            let t = read(name)?;
            if t.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, config expects {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        let opt_state = if manifest.optimizer.is_empty() {
            None
        } else {
            Some(manifest.optimizer.iter().map(|n| read(n)).collect::<Result<Vec<_>>>()?)
        };
        Ok(Self {
            params,
            epoch: manifest.epoch,
            spec: manifest.spec,
            opt_state,
        })
    }
}

/// SHA-256 over the config and raw parameter bits; equal iff the parameters
/// are bit-identical.
pub fn params_digest(params: &ModelParams<f32>) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&params.config).unwrap_or_default());
    for (name, t) in params.named_tensors() {
        h.update(name.as_bytes());
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let cfg = ModelConfig {
            width: 8,
            ..ModelConfig::default()
        };
        let params: ModelParams<f32> = init_params(&cfg, 9).unwrap();
        let mut ck = Checkpoint::new(params);
        ck.epoch = 7;
        ck.spec = serde_json::json!({"seed": 3});
        ck.opt_state = Some(ck.params.tensors().iter().map(|t| t.map(|v| v * v)).collect());
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(params_digest(&back.params), params_digest(&ck.params));
    }

    #[test]
    fn digest_changes_with_one_bit() {
        let params: ModelParams<f32> = init_params(&ModelConfig::default(), 1).unwrap();
        let mut other = params.clone();
        let w = other.tensors_mut().remove(0);
        w.data_mut()[0] = f32::from_bits(w.data()[0].to_bits() ^ 1);
        assert_ne!(params_digest(&params), params_digest(&other));
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let params: ModelParams<f32> = init_params(&ModelConfig::default(), 1).unwrap();
        Checkpoint::new(params).save(&path).unwrap();
        let blob = dir.path().join("m.bin");
        let bytes = std::fs::read(&blob).unwrap();
        std::fs::write(&blob, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }
}
