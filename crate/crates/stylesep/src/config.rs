//! Run configuration: one TOML file drives every subcommand.
//!
//! Defaults match the published constants wherever one exists (loudness
//! range, duration bounds, split ratio, rates, schedule, clue ratio);
//! anything a run overrides is recorded in its output metadata.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::MixGenConfig;
use crate::sep::ModelConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus_dir: PathBuf,
    pub mixtures_dir: PathBuf,
    pub run_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus_dir: PathBuf::from("out/corpus"),
            mixtures_dir: PathBuf::from("out/mixtures"),
            run_dir: PathBuf::from("out/run"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetKnobs {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub n_mixtures: usize,
    pub lufs_min: f64,
    pub lufs_max: f64,
    pub onset_max_frac: f64,
    pub type_ii_fraction: f64,
    pub duration_min_s: f64,
    pub duration_max_s: f64,
    pub split_seed: u64,
}

impl Default for DatasetKnobs {
    fn default() -> Self {
        DatasetKnobs {
            n_speakers: 4,
            utts_per_speaker: 16,
            n_mixtures: 280,
            lufs_min: crate::dataset::types::LUFS_MIN,
            lufs_max: crate::dataset::types::LUFS_MAX,
            onset_max_frac: 0.5,
            type_ii_fraction: 0.5,
            duration_min_s: crate::dataset::types::MIN_DURATION_S,
            duration_max_s: crate::dataset::types::MAX_DURATION_S,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum TextEncoderMode {
    Hash,
    Sidecar,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TextEncoderConfig {
    pub mode: TextEncoderMode,
    pub sidecar_path: Option<PathBuf>,
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        TextEncoderConfig { mode: TextEncoderMode::Hash, sidecar_path: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub dataset: DatasetKnobs,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub text_encoder: TextEncoderConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("config error: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), source: e })?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.display().to_string(), detail: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.sep.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.dataset.lufs_min >= self.dataset.lufs_max {
            return Err(ConfigError::Invalid("lufs_min must be below lufs_max".to_string()));
        }
        if self.text_encoder.mode == TextEncoderMode::Sidecar && self.text_encoder.sidecar_path.is_none() {
            return Err(ConfigError::Invalid("sidecar text encoder needs sidecar_path".to_string()));
        }
        Ok(())
    }

    pub fn mixgen_config(&self) -> MixGenConfig {
        MixGenConfig {
            n_mixtures: self.dataset.n_mixtures,
            lufs_min: self.dataset.lufs_min,
            lufs_max: self.dataset.lufs_max,
            onset_max_frac: self.dataset.onset_max_frac,
            type_ii_fraction: self.dataset.type_ii_fraction,
            seed: self.seed,
        }
    }

    /// Dotted paths of every field that differs from the defaults.
    pub fn overrides(&self) -> Vec<String> {
        let def = serde_json::to_value(RunConfig::default()).expect("default serializes");
        let cur = serde_json::to_value(self).expect("config serializes");
        let mut out = Vec::new();
        diff_values("", &def, &cur, &mut out);
        out.sort();
        out
    }
}

fn diff_values(prefix: &str, def: &serde_json::Value, cur: &serde_json::Value, out: &mut Vec<String>) {
    use serde_json::Value;
    match (def, cur) {
        (Value::Object(d), Value::Object(c)) => {
            for (k, dv) in d {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match c.get(k) {
                    Some(cv) => diff_values(&path, dv, cv, out),
                    None => out.push(path),
                }
            }
            for k in c.keys() {
                if !d.contains_key(k) {
                    out.push(if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") });
                }
            }
        }
        (d, c) => {
            if d != c {
                out.push(prefix.to_string());
            }
        }
    }
}

/// SHA-256 of a file, hex-encoded; used for the input-provenance table.
pub fn content_hash(path: impl AsRef<Path>) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Metadata every command drops next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunMetadata<'a> {
    pub command: &'a str,
    pub resolved_config: &'a RunConfig,
    pub overrides: Vec<String>,
    pub input_hashes: BTreeMap<String, String>,
}

pub fn write_metadata(dir: &Path, meta: &RunMetadata) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("run_meta_{}.json", meta.command));
    std::fs::write(path, serde_json::to_string_pretty(meta).expect("metadata serializes"))
}
