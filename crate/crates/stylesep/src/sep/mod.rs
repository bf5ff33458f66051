//! Clue-conditioned dual-path extraction network.

pub mod block;
pub mod checkpoint;
pub mod chunk;
pub mod config;
pub mod model;
pub mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, OptimizerMoments, TrainerState};
pub use chunk::{chunk, unchunk_overlap_add, ChunkedRep};
pub use config::{ModelConfig, SepConfig};
pub use model::SepModel;
pub use params::{Binding, ParamSet};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SepError {
    #[error("input too short: {got} samples, need at least {need}")]
    InputTooShort { got: usize, need: usize },
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error(transparent)]
    Clue(#[from] crate::clue::ClueError),
    #[error("checkpoint io error on {path}: {source}")]
    CheckpointIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint format error in {path}: {detail}")]
    CheckpointFormat { path: String, detail: String },
}
