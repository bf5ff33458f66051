//! SI-SDR improvement computation and stratified reporting.

pub mod ablation;
pub mod discrimination;
pub mod report;

pub use ablation::{ablation_harness, AblationArm, AblationReport, AblationRow};
pub use discrimination::{clue_discrimination, generate_discrimination_pairs, DiscriminationPair};
pub use report::{evaluate, EvalRecord, EvalReport, StratumCell};

use thiserror::Error;

use crate::train::si_sdr;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Sep(#[from] crate::sep::SepError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// SI-SDR improvement: how much closer the estimate is to the reference
/// than the raw mixture was.
pub fn si_sdri(mixture: &[f64], estimate: &[f64], reference: &[f64]) -> Result<f64, EvalError> {
    Ok(si_sdr(estimate, reference)? - si_sdr(mixture, reference)?)
}
