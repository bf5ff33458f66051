//! Target speech extraction guided by text and audio clues.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`numerics`]: fp64 tensor core with reverse-mode differentiation
//! - [`dsp`]: WAV I/O, integrated loudness, loudness-targeted mixing
//! - [`dataset`]: labeled corpus synthesis and mixture recipe generation
//! - [`clue`]: audio/text clue encoders and gated fusion
//! - [`sep`]: the dual-path transformer extraction network
//! - [`train`]: SI-SDR objective, Adam, schedules, the two-stage regimen
//! - [`eval`]: SI-SDR improvement reports, ablations, clue discrimination
//!
//! The `stylesep` binary wires these together behind subcommands.

pub mod cli;
pub mod clue;
pub mod config;
pub mod dataset;
pub mod dsp;
pub mod eval;
pub mod numerics;
pub mod seeding;
pub mod sep;
pub mod train;

pub use numerics::{Graph, NodeId, Parameter, Tensor};

pub fn run_cli() -> i32 {
    cli::run()
}
