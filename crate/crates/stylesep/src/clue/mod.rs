//! Bi-modality clue network: audio clue encoder with attention pooling, a
//! frozen pluggable text encoder, per-modality projections, and gated
//! fusion with missing-modality fallbacks.

pub mod network;
pub mod text_port;

pub use network::{
    attention_pool, average_pool, encode_audio_clue, fuse_alternative, fused_clue_dim, gated_fuse,
    project_clue, resolve_missing_modality, FusionMode, PoolingMode, ResolvedClue,
};
pub use text_port::{tokenize, HashTextEncoder, SidecarTextEncoder, TextEncoderPort, MAX_TOKENS, TEXT_DIM};

use thiserror::Error;

use crate::dsp::Waveform;

/// Verbatim pseudo-text used when the text clue is missing: the audio clue
/// then acts as a plain identity enrollment.
pub const PSEUDO_TEXT: &str = "Extract the same speaker.";

/// Width of the per-modality clue vectors before fusion.
pub const CLUE_DIM: usize = 256;

#[derive(Debug, Error)]
pub enum ClueError {
    #[error("empty text clue")]
    EmptyText,
    #[error("no precomputed embedding for clue text {0:?}")]
    MissingEmbedding(String),
    #[error("audio clue too short: {got} samples, need at least {need}")]
    AudioTooShort { got: usize, need: usize },
    #[error("clue bundle has neither audio nor text")]
    BothModalitiesMissing,
    #[error("text embedding sidecar: {0}")]
    Sidecar(String),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

/// The raw clue material attached to one extraction request.
#[derive(Debug, Clone, Default)]
pub struct ClueBundle {
    pub audio: Option<Waveform>,
    pub text: Option<String>,
}

impl ClueBundle {
    pub fn text_only(text: impl Into<String>) -> ClueBundle {
        ClueBundle { audio: None, text: Some(text.into()) }
    }

    pub fn audio_only(audio: Waveform) -> ClueBundle {
        ClueBundle { audio: Some(audio), text: None }
    }

    pub fn both(audio: Waveform, text: impl Into<String>) -> ClueBundle {
        ClueBundle { audio: Some(audio), text: Some(text.into()) }
    }
}
