//! Checkpoint files: one compact JSON manifest line followed by the tensors as
//! concatenated little-endian `f32` values in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Arch, Model, ModelConfig, ModelParams, ParamEntry};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the data section.
    pub offset: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub arch: Arch,
    pub n_joints: usize,
    pub dropout_rate: f64,
    /// Millimeters per network output unit.
    pub output_scale: f64,
    pub tensors: Vec<TensorInfo>,
}

/// A trained model ready to be written to or read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams<f32>,
    pub output_scale: f64,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ModelParams<f32>, output_scale: f64) -> Self {
        Self {
            config,
            params,
            output_scale,
        }
    }

    pub fn model(&self) -> Result<Model<f32>> {
        Model::from_params(self.config, self.params.clone())
    }

    pub fn manifest(&self) -> Manifest {
        let mut offset = 0;
        let tensors = self
            .params
            .entries
            .iter()
            .map(|e| {
                let info = TensorInfo {
                    name: e.name.clone(),
                    shape: e.tensor.shape().to_vec(),
                    offset,
                    trainable: e.trainable,
                };
                offset += 4 * e.tensor.len();
                info
            })
            .collect();
        Manifest {
            format_version: FORMAT_VERSION,
            arch: self.config.arch,
            n_joints: self.config.n_joints,
            dropout_rate: self.config.dropout_rate,
            output_scale: self.output_scale,
            tensors,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(&self.manifest())?;
        out.push(b'\n');
        for e in &self.params.entries {
            for v in e.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("missing manifest terminator".into()))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[..split])?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }
        let data = &bytes[split + 1..];
        let mut entries = Vec::with_capacity(manifest.tensors.len());
        let mut expected_offset = 0;
        for info in &manifest.tensors {
            let len: usize = info.shape.iter().product();
            if info.offset != expected_offset {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` at offset {} (expected {expected_offset})",
                    info.name, info.offset
                )));
            }
            let end = info.offset + 4 * len;
            let raw = data.get(info.offset..end).ok_or_else(|| {
                Error::Checkpoint(format!("tensor `{}` runs past end of file", info.name))
            })?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            entries.push(ParamEntry {
                name: info.name.clone(),
                tensor: Tensor::new(info.shape.clone(), values)?,
                trainable: info.trainable,
            });
            expected_offset = end;
        }
        if expected_offset != data.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last tensor",
                data.len() - expected_offset
            )));
        }
        let config = ModelConfig {
            arch: manifest.arch,
            n_joints: manifest.n_joints,
            dropout_rate: manifest.dropout_rate,
        };
        let ckpt = Self::new(config, ModelParams { entries }, manifest.output_scale);
        // Reject parameter sets that do not fit the architecture.
        ckpt.model()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::init_params;

    #[test]
    fn bytes_round_trip_exactly() {
        for cfg in [ModelConfig::fconn(), ModelConfig::fconv()] {
            let ckpt = Checkpoint::new(cfg, init_params(&cfg, 5), 1000.0);
            let bytes = ckpt.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ckpt);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn manifest_offsets_are_contiguous() {
        let cfg = ModelConfig::fconn();
        let m = Checkpoint::new(cfg, init_params(&cfg, 1), 1000.0).manifest();
        assert_eq!(m.tensors[0].name, "fc1.weight");
        assert_eq!(m.tensors[1].offset, 4 * 91 * 128);
    }

    #[test]
    fn truncated_or_mismatched_files_are_rejected() {
        let cfg = ModelConfig::fconn();
        let bytes = Checkpoint::new(cfg, init_params(&cfg, 1), 1000.0).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        assert!(Checkpoint::from_bytes(b"{}").is_err());
    }
}
