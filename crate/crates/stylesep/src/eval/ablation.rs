//! Fusion/pooling ablation harness.
//!
//! Trains one model per arm under identical seeds and budgets — the arms
//! differ only in the fusion method and pooling mode — and reports mean
//! SI-SDRi under the three clue conditions. At desk scale the numbers are
//! a relative comparison; the gated arm's full-scale reference values are
//! recorded as metadata, not as targets.

use serde::{Deserialize, Serialize};

use crate::clue::{FusionMode, PoolingMode, TextEncoderPort};
use crate::dataset::{CorpusIndex, MixtureSpec, Split};
use crate::sep::{ModelConfig, SepModel};
use crate::train::{train_stage, TrainConfig};

use super::report::evaluate;
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationArm {
    pub name: &'static str,
    pub fusion: FusionMode,
    pub pooling: PoolingMode,
}

/// The four standard arms.
pub fn standard_arms() -> Vec<AblationArm> {
    vec![
        AblationArm { name: "gated", fusion: FusionMode::Gated, pooling: PoolingMode::Attention },
        AblationArm { name: "average", fusion: FusionMode::Average, pooling: PoolingMode::Attention },
        AblationArm { name: "concat", fusion: FusionMode::Concat, pooling: PoolingMode::Attention },
        AblationArm { name: "gated_no_attpool", fusion: FusionMode::Gated, pooling: PoolingMode::Average },
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub arm: String,
    pub text_audio_si_sdri: Option<f64>,
    pub text_only_si_sdri: Option<f64>,
    pub audio_only_si_sdri: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// Gated-arm results from a full-scale training run, for context only.
    pub full_scale_reference_gated_db: [f64; 3],
    pub note: String,
}

/// Train and evaluate every arm. All arms share `base_config` (except the
/// ablated flags), the training configuration, and the seed.
pub fn ablation_harness(
    arms: &[AblationArm],
    base_config: &ModelConfig,
    corpus: &CorpusIndex,
    specs: &[MixtureSpec],
    train_cfg: &TrainConfig,
    port: &dyn TextEncoderPort,
    out_dir: &std::path::Path,
) -> Result<AblationReport, EvalError> {
    let mut rows = Vec::new();
    let test: Vec<&MixtureSpec> = specs.iter().filter(|s| s.split == Split::Test).collect();
    if test.is_empty() {
        return Err(EvalError::Config("test split is empty".to_string()));
    }
    for arm in arms {
        let mut config = base_config.clone();
        config.fusion = arm.fusion;
        config.pooling = arm.pooling;
        // Config-diff audit: the arm may change nothing but the two flags.
        {
            let mut reverted = config.clone();
            reverted.fusion = base_config.fusion;
            reverted.pooling = base_config.pooling;
            if reverted != *base_config {
                return Err(EvalError::Config(format!("arm {} changes more than fusion/pooling", arm.name)));
            }
        }
        let mut model = SepModel::new(config)?;
        let arm_dir = out_dir.join(format!("arm_{}", arm.name));
        train_stage(1, &mut model, corpus, specs, port, train_cfg, &arm_dir, None)?;
        train_stage(2, &mut model, corpus, specs, port, train_cfg, &arm_dir, None)?;
        let report = evaluate(&model, corpus, &test, port)?;
        rows.push(AblationRow {
            arm: arm.name.to_string(),
            text_audio_si_sdri: report.text_audio_avg.mean_si_sdri,
            text_only_si_sdri: report.text_only_avg.mean_si_sdri,
            audio_only_si_sdri: report.audio_only.mean_si_sdri,
        });
    }
    Ok(AblationReport {
        rows,
        full_scale_reference_gated_db: [16.84, 16.41, 15.72],
        note: "desk-scale relative comparison under shared seeds and budgets; the full-scale \
               reference row is context, not a target"
            .to_string(),
    })
}

impl AblationReport {
    pub fn render_text(&self) -> String {
        let cell = |v: &Option<f64>| match v {
            Some(x) => format!("{:>10.2}", x),
            None => format!("{:>10}", "-"),
        };
        let mut out = String::new();
        out.push_str(&format!(
            "{:<18} {:>10} {:>10} {:>10}\n",
            "fusion", "text-audio", "text-only", "audio-only"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<18} {} {} {}\n",
                r.arm,
                cell(&r.text_audio_si_sdri),
                cell(&r.text_only_si_sdri),
                cell(&r.audio_only_si_sdri)
            ));
        }
        out.push_str(&format!(
            "\nfull-scale gated reference (dB): {:.2} / {:.2} / {:.2}\n{}\n",
            self.full_scale_reference_gated_db[0],
            self.full_scale_reference_gated_db[1],
            self.full_scale_reference_gated_db[2],
            self.note
        ));
        out
    }
}
