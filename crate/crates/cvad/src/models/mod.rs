//! The cascade generator and the binary discriminator.
//!
//! The generator is a standard conv VAE (encoder stages E11+E12, decoder
//! stages D11+D12) plus a branch VAE that encodes the concatenation of the
//! E11 feature map with the (pooled) D11 feature map into a wider latent and
//! decodes it through its own copy of the decoder architecture. The combined
//! reconstruction is sigmoid(x1_logits + x2_logits).

mod discriminator;
mod generator;
mod stages;

pub use discriminator::{DiscTape, Discriminator};
pub use generator::{
    combine_logits, reparameterize, Generator, GeneratorLossGrads, GeneratorOutput, GeneratorTape,
    LatentSample,
};
pub use stages::is_trainable;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of every network in the toolkit.
///
/// The channel schedule doubles from `base_channels` at every stride-2 stage;
/// the latent width is `latent_dim` for the primary branch and four times that
/// for the detail branch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub image_size: usize,
    pub in_channels: usize,
    pub base_channels: usize,
    pub depth: usize,
    pub latent_dim: usize,
    pub branch_enabled: bool,
    pub branch_channels: usize,
}

impl ArchConfig {
    /// 64x64 preset sized for CPU experiments.
    pub fn desk() -> Self {
        ArchConfig {
            image_size: 64,
            in_channels: 1,
            base_channels: 16,
            depth: 5,
            latent_dim: 128,
            branch_enabled: true,
            branch_channels: 64,
        }
    }

    /// 256x256 preset matching the full-scale layer schedule (K = 512).
    pub fn paper() -> Self {
        ArchConfig {
            image_size: 256,
            in_channels: 1,
            base_channels: 16,
            depth: 5,
            latent_dim: 512,
            branch_enabled: true,
            branch_channels: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.image_size.is_power_of_two() || self.image_size < 32 {
            return Err(Error::Config(format!(
                "image_size must be a power of two >= 32, got {}",
                self.image_size
            )));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return Err(Error::Config(format!(
                "in_channels must be 1 or 3, got {}",
                self.in_channels
            )));
        }
        if self.base_channels == 0 || self.latent_dim == 0 {
            return Err(Error::Config(
                "base_channels and latent_dim must be >= 1".into(),
            ));
        }
        if self.depth < 2 {
            return Err(Error::Config(format!(
                "depth must be >= 2, got {}",
                self.depth
            )));
        }
        if self.image_size >> self.depth < 2 {
            return Err(Error::Config(format!(
                "image_size {} / 2^{} leaves a bottleneck below 2",
                self.image_size, self.depth
            )));
        }
        if self.branch_enabled {
            if self.branch_channels == 0 {
                return Err(Error::Config("branch_channels must be >= 1".into()));
            }
            if self.e11_spatial() < 4 {
                return Err(Error::Config(format!(
                    "branch tap spatial extent {} is too small for a conv stage",
                    self.e11_spatial()
                )));
            }
        }
        Ok(())
    }

    /// Channel counts along the encoder: `[in, base, 2*base, ...]`, length depth+1.
    pub fn enc_channels(&self) -> Vec<usize> {
        let mut ch = Vec::with_capacity(self.depth + 1);
        ch.push(self.in_channels);
        for i in 0..self.depth {
            ch.push(self.base_channels << i);
        }
        ch
    }

    /// Channel counts along the decoder, mirroring the encoder.
    pub fn dec_channels(&self) -> Vec<usize> {
        let mut ch = Vec::with_capacity(self.depth + 1);
        for i in (0..self.depth).rev() {
            ch.push(self.base_channels << i);
        }
        ch.push(self.in_channels);
        ch
    }

    /// Number of encoder stages in the E11 tap: first ceil(3*depth/5).
    pub fn e11_stages(&self) -> usize {
        (3 * self.depth).div_ceil(5)
    }

    /// Number of decoder stages in the D11 tap (same split as the encoder).
    pub fn d11_stages(&self) -> usize {
        self.e11_stages()
    }

    pub fn bottleneck_spatial(&self) -> usize {
        self.image_size >> self.depth
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.base_channels << (self.depth - 1)
    }

    pub fn bottleneck_features(&self) -> usize {
        self.bottleneck_channels() * self.bottleneck_spatial() * self.bottleneck_spatial()
    }

    pub fn e11_channels(&self) -> usize {
        self.enc_channels()[self.e11_stages()]
    }

    pub fn e11_spatial(&self) -> usize {
        self.image_size >> self.e11_stages()
    }

    pub fn d11_channels(&self) -> usize {
        self.dec_channels()[self.d11_stages()]
    }

    pub fn d11_spatial(&self) -> usize {
        self.bottleneck_spatial() << self.d11_stages()
    }

    /// Channels of the branch input after pooling D11 down to the E11 extent.
    pub fn branch_in_channels(&self) -> usize {
        self.e11_channels() + self.d11_channels()
    }

    /// Flattened width fed to the branch latent heads.
    pub fn branch_flat_features(&self) -> usize {
        let s = self.e11_spatial() / 2;
        self.branch_channels * s * s
    }

    pub fn branch_latent_dim(&self) -> usize {
        4 * self.latent_dim
    }
}
