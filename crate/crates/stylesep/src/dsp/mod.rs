//! Waveform I/O, integrated loudness, and loudness-targeted mixing.

mod loudness;
mod mix;
mod wav;

pub use loudness::{k_weighting_gain_db, measure_lufs, rescale_to_lufs, LoudnessLufs};
pub use mix::{mix_at_onset, snr_energy_db, snr_lu, MixResult};
pub use wav::{read_wav, write_wav};

use thiserror::Error;

/// Fixed sample rate for the whole artifact.
pub const SAMPLE_RATE: u32 = 8000;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("wav format error in {path}: {field} is {got}, expected {expected}")]
    Format { path: String, field: &'static str, got: String, expected: String },
    #[error("wav parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("loudness undefined: every gating block fell below the absolute gate")]
    NoGatedBlocks,
    #[error("audio too short: {got} samples, need at least {need}")]
    TooShort { got: usize, need: usize },
}

/// Mono fp64 sample buffer at [`SAMPLE_RATE`].
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>) -> Self {
        Waveform { samples, sample_rate: SAMPLE_RATE }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &s| m.max(s.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform { samples: self.samples.iter().map(|s| s * gain).collect(), sample_rate: self.sample_rate }
    }
}
