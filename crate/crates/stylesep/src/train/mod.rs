//! SI-SDR training: objective, optimizer, schedule, batch assembly, and the
//! two-stage regimen with clue-condition sampling and dynamic mixing.

pub mod adam;
pub mod batch;
pub mod schedule;
pub mod sisdr;
pub mod trainer;

pub use adam::{clip_global_norm, Adam};
pub use batch::{build_batch, sample_clue_condition, BatchItem, ClueCondition};
pub use schedule::{lr_schedule, LrDecision};
pub use sisdr::{si_sdr, si_sdr_loss_node, EPS_DENOM, EPS_ENERGY};
pub use trainer::{train_stage, EpochLog, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("estimate/reference length mismatch: {estimate} vs {reference}")]
    LengthMismatch { estimate: usize, reference: usize },
    #[error("reference signal has (near-)zero energy")]
    ZeroEnergyReference,
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Sep(#[from] crate::sep::SepError),
    #[error(transparent)]
    Clue(#[from] crate::clue::ClueError),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

/// Two-stage training hyperparameters. The published rates and schedule
/// constants are the defaults; step/epoch budgets are desk-scale knobs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub lr_floor: f64,
    pub plateau_patience: usize,
    pub plateau_start_epoch: usize,
    /// Improvement below this tolerance counts as a stall.
    pub val_improve_tol: f64,
    pub batch_size: usize,
    /// Training crops cap at this many seconds.
    pub max_signal_s: f64,
    /// Mixtures shorter than this are skipped with a log line.
    pub min_signal_s: f64,
    pub max_text_tokens: usize,
    /// text-audio : text-only : audio-only sampling weights for stage 2.
    pub clue_ratio: (u32, u32, u32),
    /// Dynamic mixing in stage 2 (stage 1 always trains without it).
    pub dm_enabled: bool,
    /// Stage 1 is step-budgeted at a fixed rate.
    pub stage1_steps: usize,
    /// Stage 2 is epoch-scheduled.
    pub stage2_epochs: usize,
    pub grad_clip_norm: f64,
    pub onset_max_frac: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_stage1: 2e-4,
            lr_stage2: 1.5e-4,
            lr_floor: 1e-6,
            plateau_patience: 2,
            plateau_start_epoch: 70,
            val_improve_tol: 1e-4,
            batch_size: 8,
            max_signal_s: 3.0,
            min_signal_s: 0.5,
            max_text_tokens: crate::clue::MAX_TOKENS,
            clue_ratio: (2, 2, 1),
            dm_enabled: true,
            stage1_steps: 400,
            stage2_epochs: 12,
            grad_clip_norm: 5.0,
            onset_max_frac: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".to_string()));
        }
        if self.max_text_tokens != crate::clue::MAX_TOKENS {
            return Err(TrainError::Config(format!(
                "max_text_tokens is fixed at {} by the text port",
                crate::clue::MAX_TOKENS
            )));
        }
        if !(self.max_signal_s > 0.0) || self.min_signal_s < 0.0 {
            return Err(TrainError::Config("signal length bounds invalid".to_string()));
        }
        let (a, b, c) = self.clue_ratio;
        if a + b + c == 0 {
            return Err(TrainError::Config("clue_ratio must have positive mass".to_string()));
        }
        Ok(())
    }
}
