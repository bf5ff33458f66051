//! Corpus modeling and mixture-recipe generation: attribute constraints,
//! clue construction, splits, and dynamic-mixing alternatives.

pub mod manifest;
pub mod mixgen;
pub mod pairing;
pub mod splits;
pub mod templates;
pub mod toy;
pub mod types;

pub use manifest::{ingest_manifest, write_manifest, IngestReport};
pub use mixgen::{
    compute_stats, dynamic_remix, generate_specs, synthesize_mixture, validate_specs, CorpusIndex,
    DatasetStats, MixGenConfig, RealizedMixture, SynthesizedMixture,
};
pub use pairing::{pair_interference, select_reference};
pub use splits::make_splits;
pub use templates::{render_text_clue, TemplateTable};
pub use toy::{synth_toy_corpus, toy_utterance_waveform};
pub use types::{
    AttributeKind, ClueKind, ClueSpec, LengthClass, MixtureSpec, Pitch, Split, StyleAttributes, Tempo,
    UtteranceRecord, ALL_ATTRIBUTES,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("no {what} candidate satisfies the attribute constraints for target {target}")]
    PairingExhausted { what: &'static str, target: String },
    #[error("unknown utterance id {0}")]
    UnknownUtterance(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dsp error while processing {context}: {source}")]
    Dsp {
        context: String,
        #[source]
        source: crate::dsp::DspError,
    },
}
