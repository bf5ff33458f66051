//! Stratified evaluation over a test split.
//!
//! Three passes mirror the reporting structure: text-only runs stratify by
//! description length, text+audio runs by the highlighted attribute, and
//! audio-only runs are reported as a single unstratified row (audio-only
//! behaves like identity enrollment, so per-attribute rows would restate
//! the speaker-identity case; see the report footer).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clue::{ClueBundle, TextEncoderPort};
use crate::dataset::{AttributeKind, ClueKind, CorpusIndex, LengthClass, MixtureSpec};
use crate::sep::SepModel;
use crate::train::{si_sdr, ClueCondition};

use super::{si_sdri, EvalError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub mixture_id: String,
    pub condition: ClueCondition,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_class: Option<LengthClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attribute: Option<AttributeKind>,
    pub si_sdr_mix: f64,
    pub si_sdr_est: f64,
    pub si_sdri: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct StratumCell {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_si_sdri: Option<f64>,
}

impl StratumCell {
    fn from_values(values: &[f64]) -> StratumCell {
        if values.is_empty() {
            StratumCell { n: 0, mean_si_sdri: None }
        } else {
            StratumCell {
                n: values.len(),
                mean_si_sdri: Some(values.iter().sum::<f64>() / values.len() as f64),
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    /// Text-only rows keyed long/mid/short, plus the item-weighted average.
    pub text_only: BTreeMap<String, StratumCell>,
    pub text_only_avg: StratumCell,
    /// Text+audio rows keyed by highlighted attribute, plus the average.
    pub text_audio: BTreeMap<String, StratumCell>,
    pub text_audio_avg: StratumCell,
    /// Audio-only, unstratified.
    pub audio_only: StratumCell,
    pub footer: String,
}

fn record(
    model: &SepModel,
    corpus: &CorpusIndex,
    spec: &MixtureSpec,
    bundle: &ClueBundle,
    condition: ClueCondition,
    port: &dyn TextEncoderPort,
) -> Result<EvalRecord, EvalError> {
    let synth = crate::dataset::synthesize_mixture(corpus, spec)?;
    let est = model.extract(&synth.mixture, bundle, port)?;
    let si_mix = si_sdr(&synth.mixture.samples, &synth.target_ref.samples)?;
    let si_est = si_sdr(&est.samples, &synth.target_ref.samples)?;
    Ok(EvalRecord {
        mixture_id: spec.mixture_id.clone(),
        condition,
        length_class: match condition {
            ClueCondition::TextOnly => Some(spec.clue.length_class),
            _ => None,
        },
        attribute: match condition {
            ClueCondition::TextAudio => spec.clue.highlighted_attribute,
            _ => None,
        },
        si_sdr_mix: si_mix,
        si_sdr_est: si_est,
        si_sdri: si_sdri(&synth.mixture.samples, &est.samples, &synth.target_ref.samples)?,
    })
}

/// Evaluate a model over the given (test) specs.
pub fn evaluate(
    model: &SepModel,
    corpus: &CorpusIndex,
    specs: &[&MixtureSpec],
    port: &dyn TextEncoderPort,
) -> Result<EvalReport, EvalError> {
    let mut records = Vec::new();
    for spec in specs {
        match spec.clue.kind {
            ClueKind::TypeIText => {
                let bundle = ClueBundle::text_only(spec.clue.text.clone());
                records.push(record(model, corpus, spec, &bundle, ClueCondition::TextOnly, port)?);
            }
            ClueKind::TypeIiReference => {
                let reference = corpus.load_waveform(spec.clue.reference_id.as_deref().unwrap())?;
                let both = ClueBundle::both(reference.clone(), spec.clue.text.clone());
                records.push(record(model, corpus, spec, &both, ClueCondition::TextAudio, port)?);
                let audio = ClueBundle::audio_only(reference);
                records.push(record(model, corpus, spec, &audio, ClueCondition::AudioOnly, port)?);
            }
        }
    }
    Ok(assemble(records))
}

fn assemble(records: Vec<EvalRecord>) -> EvalReport {
    let mut text_only: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for lc in ["long", "mid", "short"] {
        text_only.insert(lc.to_string(), Vec::new());
    }
    let mut text_audio: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut text_only_all = Vec::new();
    let mut text_audio_all = Vec::new();
    let mut audio_only_all = Vec::new();

    for r in &records {
        match r.condition {
            ClueCondition::TextOnly => {
                let key = r.length_class.map(|l| l.as_str()).unwrap_or("mid").to_string();
                text_only.entry(key).or_default().push(r.si_sdri);
                text_only_all.push(r.si_sdri);
            }
            ClueCondition::TextAudio => {
                let key = r
                    .attribute
                    .map(|a| a.display_word().to_string())
                    .unwrap_or_else(|| "unknown".to_string());
                text_audio.entry(key).or_default().push(r.si_sdri);
                text_audio_all.push(r.si_sdri);
            }
            ClueCondition::AudioOnly => audio_only_all.push(r.si_sdri),
        }
    }

    EvalReport {
        text_only: text_only.iter().map(|(k, v)| (k.clone(), StratumCell::from_values(v))).collect(),
        text_only_avg: StratumCell::from_values(&text_only_all),
        text_audio: text_audio.iter().map(|(k, v)| (k.clone(), StratumCell::from_values(v))).collect(),
        text_audio_avg: StratumCell::from_values(&text_audio_all),
        audio_only: StratumCell::from_values(&audio_only_all),
        footer: "audio-only runs behave as identity enrollment and are reported unstratified"
            .to_string(),
        records,
    }
}

impl EvalReport {
    /// Aligned plain-text rendering of the two tables.
    pub fn render_text(&self) -> String {
        let cell = |c: &StratumCell| match c.mean_si_sdri {
            Some(m) => format!("{:>8.2}  (n={})", m, c.n),
            None => format!("{:>8}  (n=0)", "-"),
        };
        let mut out = String::new();
        out.push_str("SI-SDRi (dB) by clue condition\n");
        out.push_str("\ntext-only, by description length\n");
        for key in ["long", "mid", "short"] {
            let c = self.text_only.get(key).cloned().unwrap_or_default();
            out.push_str(&format!("  {:<10} {}\n", key, cell(&c)));
        }
        out.push_str(&format!("  {:<10} {}\n", "avg", cell(&self.text_only_avg)));
        out.push_str("\ntext+audio, by highlighted attribute\n");
        for (key, c) in &self.text_audio {
            out.push_str(&format!("  {:<10} {}\n", key, cell(c)));
        }
        out.push_str(&format!("  {:<10} {}\n", "avg", cell(&self.text_audio_avg)));
        out.push_str("\naudio-only\n");
        out.push_str(&format!("  {:<10} {}\n", "all", cell(&self.audio_only)));
        out.push_str(&format!("\nnote: {}\n", self.footer));
        out
    }
}
