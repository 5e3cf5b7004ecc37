//! Checkpoint container and its binary file format.
//!
//! Layout: magic `CVADCKPT`, little-endian u32 format version, little-endian
//! u64 header length, UTF-8 JSON header (configs, stage, epoch, calibration,
//! tensor directory ordered lexicographically by name), then the contiguous
//! little-endian f32 tensor payloads at the offsets the directory declares.
//! Saving a loaded checkpoint reproduces the file byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::models::{ArchConfig, Discriminator, Generator};
use crate::nn::ParamSet;
use crate::tensor::Tensor;

pub const CKPT_MAGIC: &[u8; 8] = b"CVADCKPT";
pub const CKPT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Generator,
    Full,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generator => "generator",
            Stage::Full => "full",
        }
    }
}

/// Min/max of the per-sample generator loss over the validation ID set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub lg_min: f32,
    pub lg_max: f32,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchConfig,
    train: TrainConfig,
    stage: Stage,
    epoch: usize,
    seed: u64,
    config_hash: String,
    calibration: Option<Calibration>,
    tensors: Vec<TensorInfo>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub stage: Stage,
    pub epoch: usize,
    pub seed: u64,
    pub config_hash: String,
    pub calibration: Option<Calibration>,
    pub tensors: ParamSet<f32>,
}

impl Checkpoint {
    /// The exact tensor directory this checkpoint must carry.
    pub fn expected_names(arch: &ArchConfig, stage: Stage) -> Vec<String> {
        let mut names = Generator::<f32>::param_names(arch);
        if stage == Stage::Full {
            names.extend(Discriminator::<f32>::param_names(arch));
        }
        names
    }

    pub fn validate(&self) -> Result<()> {
        let names = Self::expected_names(&self.arch, self.stage);
        self.tensors
            .check_directory(names.iter().map(|s| s.as_str()))
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if let Some(c) = &self.calibration {
            let ordered = c
                .lg_min
                .partial_cmp(&c.lg_max)
                .is_some_and(|o| o != std::cmp::Ordering::Greater);
            if !ordered {
                return Err(Error::Checkpoint(format!(
                    "calibration min {} > max {}",
                    c.lg_min, c.lg_max
                )));
            }
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<Generator<f32>> {
        Generator::from_params(self.arch.clone(), self.tensors.subset("gen."))
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn discriminator(&self) -> Result<Discriminator<f32>> {
        if self.stage != Stage::Full {
            return Err(Error::State(
                "checkpoint has no discriminator (stage=generator)".to_string(),
            ));
        }
        Discriminator::from_params(self.arch.clone(), self.tensors.subset("disc."))
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut infos = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for (name, tensor) in self.tensors.iter() {
            infos.push(TensorInfo {
                name: name.to_string(),
                shape: tensor.shape().to_vec(),
                dtype: "f32".to_string(),
                offset,
            });
            offset += (tensor.len() * 4) as u64;
        }
        let header = Header {
            arch: self.arch.clone(),
            train: self.train.clone(),
            stage: self.stage,
            epoch: self.epoch,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            calibration: self.calibration,
            tensors: infos,
        };
        let header_json =
            serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let mut out = Vec::with_capacity(20 + header_json.len() + offset as usize);
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_json);
        for (_, tensor) in self.tensors.iter() {
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 20 || &bytes[..8] != CKPT_MAGIC {
            return Err(Error::Checkpoint(format!("{}: bad magic", path.display())));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CKPT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}, expected {CKPT_VERSION}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if bytes.len() < 20 + header_len {
            return Err(Error::Checkpoint("truncated header".to_string()));
        }
        let header: Header = serde_json::from_slice(&bytes[20..20 + header_len])
            .map_err(|e| Error::Checkpoint(format!("bad header json: {e}")))?;
        let payload = &bytes[20 + header_len..];

        let mut tensors = ParamSet::new();
        let mut expected_offset = 0u64;
        for info in &header.tensors {
            if info.dtype != "f32" {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has dtype {}, expected f32",
                    info.name, info.dtype
                )));
            }
            if info.offset != expected_offset {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` offset {} breaks contiguity (expected {expected_offset})",
                    info.name, info.offset
                )));
            }
            let count: usize = info.shape.iter().product();
            let start = info.offset as usize;
            let end = start + count * 4;
            if end > payload.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` overruns payload",
                    info.name
                )));
            }
            let data: Vec<f32> = payload[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.insert(info.name.clone(), Tensor::from_vec(&info.shape, data)?);
            expected_offset = end as u64;
        }
        if expected_offset as usize != payload.len() {
            return Err(Error::Checkpoint("payload has trailing bytes".to_string()));
        }

        let ckpt = Checkpoint {
            arch: header.arch,
            train: header.train,
            stage: header.stage,
            epoch: header.epoch,
            seed: header.seed,
            config_hash: header.config_hash,
            calibration: header.calibration,
            tensors,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }
}
