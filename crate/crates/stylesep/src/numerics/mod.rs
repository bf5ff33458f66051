//! Minimal dense-tensor core with reverse-mode differentiation.
//!
//! Everything the extraction model needs and nothing more: 1-D (transposed)
//! convolutions, affine maps, multi-head attention, softmax / layer norm /
//! relu / sigmoid, chunking with overlap-add, and a finite-difference
//! gradient checker. All math is fp64; computation is recorded on a
//! single-threaded tape ([`Graph`]) and replayed in reverse for gradients.

mod attention;
mod gradcheck;
mod tape;
mod tensor;

pub use attention::{linear_batched, multi_head_attention, multi_head_attention_batched, AttentionParams};
pub use gradcheck::{grad_check, grad_check_sampled, GradCheckReport};
pub use tape::{frame_count as tape_frame_count, Graph, NodeId};
pub use tensor::{Parameter, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("dimension error in {context}: {detail}")]
    Dimension { context: &'static str, detail: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
}

/// Epsilon used inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;
