//! Network hyperparameters.

use serde::{Deserialize, Serialize};

use crate::clue::{FusionMode, PoolingMode, CLUE_DIM};
use crate::numerics::NumericsError;

/// Separation-network dimensions. Defaults are the desk-scale working
/// point; a full-scale run would raise them toward the published dual-path
/// configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SepConfig {
    /// Encoder channels F.
    pub channels: usize,
    /// Encoder kernel length K in samples.
    pub kernel: usize,
    /// Encoder hop in samples; must not exceed the kernel.
    pub stride: usize,
    /// Chunk size C in encoder frames.
    pub chunk: usize,
    /// Chunk overlap ratio in (0, 1); 0.5 gives hop C/2.
    pub overlap: f64,
    /// Dual-path (intra + inter) repeats.
    pub repeats: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Clue vector width after projection.
    pub clue_dim: usize,
    /// Apply ReLU after the mixture/clue encoders.
    pub encoder_relu: bool,
}

impl Default for SepConfig {
    fn default() -> Self {
        SepConfig {
            channels: 64,
            kernel: 16,
            stride: 8,
            chunk: 50,
            overlap: 0.5,
            repeats: 2,
            heads: 4,
            ff_dim: 256,
            clue_dim: CLUE_DIM,
            encoder_relu: true,
        }
    }
}

impl SepConfig {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.stride == 0 || self.kernel == 0 || self.stride > self.kernel {
            return Err(NumericsError::Config(format!(
                "stride {} must be in [1, kernel {}]",
                self.stride, self.kernel
            )));
        }
        if !(self.overlap > 0.0 && self.overlap < 1.0) {
            return Err(NumericsError::Config(format!("overlap {} outside (0, 1)", self.overlap)));
        }
        if self.chunk_hop() == 0 {
            return Err(NumericsError::Config("chunk hop rounds to zero".to_string()));
        }
        if self.heads == 0 || self.channels % self.heads != 0 {
            return Err(NumericsError::Config(format!(
                "channels {} not divisible by heads {}",
                self.channels, self.heads
            )));
        }
        if self.repeats == 0 {
            return Err(NumericsError::Config("need at least one dual-path repeat".to_string()));
        }
        if self.clue_dim != CLUE_DIM {
            return Err(NumericsError::Config(format!(
                "clue_dim {} unsupported; projections are fixed at {}",
                self.clue_dim, CLUE_DIM
            )));
        }
        Ok(())
    }

    pub fn chunk_hop(&self) -> usize {
        ((self.chunk as f64) * (1.0 - self.overlap)).round() as usize
    }

    /// Encoder frame count for an input of `len` samples.
    pub fn frames_for(&self, len: usize) -> Option<usize> {
        if len < self.kernel {
            None
        } else {
            Some((len - self.kernel) / self.stride + 1)
        }
    }
}

/// Everything the checkpoint header needs to rebuild the model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub sep: SepConfig,
    pub fusion: FusionMode,
    pub pooling: PoolingMode,
    /// Seed for the frozen hash text-encoder table.
    pub text_encoder_seed: u64,
    /// Seed for parameter initialization.
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            sep: SepConfig::default(),
            fusion: FusionMode::Gated,
            pooling: PoolingMode::Attention,
            text_encoder_seed: 0,
            init_seed: 0,
        }
    }
}
