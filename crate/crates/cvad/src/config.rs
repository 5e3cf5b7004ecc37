//! Run configuration: a named preset (`desk` or `paper`) overlaid with a flat
//! key=value config file. Unknown keys are rejected; every output embeds the
//! hash of the fully resolved configuration.

use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::models::ArchConfig;
use crate::scoring::ScoreMode;
use crate::training::TrainConfig;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub bootstrap_rounds: usize,
    pub score_mode: ScoreMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub id_count: usize,
    pub id_test_count: usize,
    pub intra_count: usize,
    pub inter1_count: usize,
    pub inter2_count: usize,
    pub inter3_count: usize,
    pub lesion_size: usize,
    pub lesion_delta: f64,
    pub noise_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(RunConfig {
                arch: ArchConfig::desk(),
                train: TrainConfig {
                    epochs_stage1: 30,
                    epochs_stage2: 10,
                    batch_size: 32,
                    lr: 0.001,
                    seed: 7,
                    alpha1: 1.0,
                    alpha2: 1.0,
                },
                data: DataConfig {
                    id_count: 2000,
                    id_test_count: 500,
                    intra_count: 500,
                    inter1_count: 500,
                    inter2_count: 500,
                    inter3_count: 500,
                    lesion_size: 10,
                    lesion_delta: 0.45,
                    noise_std: 0.02,
                },
                eval: EvalConfig {
                    bootstrap_rounds: 10,
                    score_mode: ScoreMode::Dataset,
                },
            }),
            "paper" => Ok(RunConfig {
                arch: ArchConfig::paper(),
                train: TrainConfig {
                    epochs_stage1: 100,
                    epochs_stage2: 30,
                    batch_size: 32,
                    lr: 0.001,
                    seed: 7,
                    alpha1: 1.0,
                    alpha2: 1.0,
                },
                data: DataConfig {
                    id_count: 2000,
                    id_test_count: 500,
                    intra_count: 500,
                    inter1_count: 500,
                    inter2_count: 500,
                    inter3_count: 500,
                    lesion_size: 40,
                    lesion_delta: 0.45,
                    noise_std: 0.02,
                },
                eval: EvalConfig {
                    bootstrap_rounds: 10,
                    score_mode: ScoreMode::Dataset,
                },
            }),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (use desk|paper)"
            ))),
        }
    }

    /// Overlay `key = value` lines onto this configuration. `#` starts a
    /// comment; unknown keys are rejected.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key=value, got `{raw}`",
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse::<T>()
                .map_err(|_| Error::Config(format!("bad value `{value}` for {key}")))
        }
        match key {
            "arch.image_size" => self.arch.image_size = num(key, value)?,
            "arch.in_channels" => self.arch.in_channels = num(key, value)?,
            "arch.base_channels" => self.arch.base_channels = num(key, value)?,
            "arch.depth" => self.arch.depth = num(key, value)?,
            "arch.latent_dim" => self.arch.latent_dim = num(key, value)?,
            "arch.branch_enabled" => {
                self.arch.branch_enabled = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => return Err(Error::Config(format!("bad bool `{value}` for {key}"))),
                }
            }
            "arch.branch_channels" => self.arch.branch_channels = num(key, value)?,
            "train.epochs_stage1" => self.train.epochs_stage1 = num(key, value)?,
            "train.epochs_stage2" => self.train.epochs_stage2 = num(key, value)?,
            "train.batch_size" => self.train.batch_size = num(key, value)?,
            "train.lr" => self.train.lr = num(key, value)?,
            "train.seed" => self.train.seed = num(key, value)?,
            "train.alpha1" => self.train.alpha1 = num(key, value)?,
            "train.alpha2" => self.train.alpha2 = num(key, value)?,
            "data.id_count" => self.data.id_count = num(key, value)?,
            "data.id_test_count" => self.data.id_test_count = num(key, value)?,
            "data.intra_count" => self.data.intra_count = num(key, value)?,
            "data.inter1_count" => self.data.inter1_count = num(key, value)?,
            "data.inter2_count" => self.data.inter2_count = num(key, value)?,
            "data.inter3_count" => self.data.inter3_count = num(key, value)?,
            "data.lesion_size" => self.data.lesion_size = num(key, value)?,
            "data.lesion_delta" => self.data.lesion_delta = num(key, value)?,
            "data.noise_std" => self.data.noise_std = num(key, value)?,
            "eval.bootstrap_rounds" => self.eval.bootstrap_rounds = num(key, value)?,
            "eval.score_mode" => self.eval.score_mode = ScoreMode::parse(value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.train.validate()?;
        self.synth_spec().validate()?;
        if self.eval.bootstrap_rounds == 0 {
            return Err(Error::Config("eval.bootstrap_rounds must be >= 1".into()));
        }
        Ok(())
    }

    /// The synthetic-data spec implied by this config (image size and seed are
    /// shared with the arch/train sections).
    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            image_size: self.arch.image_size,
            id_count: self.data.id_count,
            id_test_count: self.data.id_test_count,
            intra_count: self.data.intra_count,
            inter1_count: self.data.inter1_count,
            inter2_count: self.data.inter2_count,
            inter3_count: self.data.inter3_count,
            lesion_size: self.data.lesion_size,
            lesion_delta: self.data.lesion_delta,
            noise_std: self.data.noise_std,
            seed: self.train.seed,
        }
    }

    /// Every key=value pair in a fixed order; the config hash is the FNV-1a
    /// hash of this string.
    pub fn canonical_string(&self) -> String {
        let mode = self.eval.score_mode.as_str();
        format!(
            "arch.base_channels={}\narch.branch_channels={}\narch.branch_enabled={}\n\
             arch.depth={}\narch.image_size={}\narch.in_channels={}\narch.latent_dim={}\n\
             data.id_count={}\ndata.id_test_count={}\ndata.inter1_count={}\ndata.inter2_count={}\n\
             data.inter3_count={}\ndata.intra_count={}\ndata.lesion_delta={}\ndata.lesion_size={}\n\
             data.noise_std={}\neval.bootstrap_rounds={}\neval.score_mode={}\n\
             train.alpha1={}\ntrain.alpha2={}\ntrain.batch_size={}\ntrain.epochs_stage1={}\n\
             train.epochs_stage2={}\ntrain.lr={}\ntrain.seed={}\n",
            self.arch.base_channels,
            self.arch.branch_channels,
            self.arch.branch_enabled,
            self.arch.depth,
            self.arch.image_size,
            self.arch.in_channels,
            self.arch.latent_dim,
            self.data.id_count,
            self.data.id_test_count,
            self.data.inter1_count,
            self.data.inter2_count,
            self.data.inter3_count,
            self.data.intra_count,
            self.data.lesion_delta,
            self.data.lesion_size,
            self.data.noise_std,
            self.eval.bootstrap_rounds,
            mode,
            self.train.alpha1,
            self.train.alpha2,
            self.train.batch_size,
            self.train.epochs_stage1,
            self.train.epochs_stage2,
            self.train.lr,
            self.train.seed,
        )
    }

    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_string().as_bytes()))
    }
}
