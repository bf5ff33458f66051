//! Batch assembly: dynamic mixing, aligned cropping, clue-condition
//! sampling, and per-condition clue material.
//!
//! All randomness comes from streams keyed by (seed, purpose, mixture_id,
//! epoch), never from shared sequential state, so any item can be rebuilt
//! in isolation and training is resumable mid-stage.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clue::ResolvedClue;
use crate::dataset::templates::{render_text_clue_with, render_type_ii_prompt, TemplateTable};
use crate::dataset::{
    dynamic_remix, select_reference, synthesize_mixture, ClueKind, CorpusIndex, LengthClass, MixtureSpec,
};
use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::seeding::stream_rng;
use crate::sep::SepConfig;

use super::{TrainConfig, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClueCondition {
    TextAudio,
    TextOnly,
    AudioOnly,
}

impl ClueCondition {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClueCondition::TextAudio => "text_audio",
            ClueCondition::TextOnly => "text_only",
            ClueCondition::AudioOnly => "audio_only",
        }
    }
}

/// Stage-2 conditions follow the configured text-audio : text-only :
/// audio-only weights; stage 1 always trains bi-modal.
pub fn sample_clue_condition(stage: u8, rng: &mut impl Rng, cfg: &TrainConfig) -> ClueCondition {
    if stage == 1 {
        return ClueCondition::TextAudio;
    }
    let (a, b, c) = cfg.clue_ratio;
    let total = (a + b + c) as f64;
    let u: f64 = rng.gen_range(0.0..1.0);
    if u < a as f64 / total {
        ClueCondition::TextAudio
    } else if u < (a + b) as f64 / total {
        ClueCondition::TextOnly
    } else {
        ClueCondition::AudioOnly
    }
}

#[derive(Debug, Clone)]
pub struct BatchItem {
    pub mixture_id: String,
    pub mixture: Waveform,
    pub reference: Waveform,
    pub clue: ResolvedClue,
    pub condition: ClueCondition,
}

/// Crop length in samples, aligned so the decoder reconstructs the crop
/// length exactly: len = K + m * stride.
fn aligned_crop_len(len: usize, max_s: f64, sep: &SepConfig) -> usize {
    let cap = (max_s * SAMPLE_RATE as f64) as usize;
    let len = len.min(cap);
    if len <= sep.kernel {
        return len;
    }
    sep.kernel + ((len - sep.kernel) / sep.stride) * sep.stride
}

/// Reference audio for the clue: the stored reference when the mixture has
/// one, otherwise one derived on the fly exactly as corpus generation
/// would (an attribute splitting target from interference plus an
/// utterance realizing it).
fn clue_reference(
    spec: &MixtureSpec,
    corpus: &CorpusIndex,
    rng: &mut impl Rng,
) -> Result<Option<(String, crate::dataset::AttributeKind)>, TrainError> {
    if let (Some(rid), Some(attr)) = (&spec.clue.reference_id, spec.clue.highlighted_attribute) {
        return Ok(Some((rid.clone(), attr)));
    }
    let target = corpus.get(&spec.target_id)?;
    let interference = corpus.get(&spec.interference_id)?;
    let mut attrs = target.attributes.differing(&interference.attributes);
    attrs.shuffle(rng);
    for attribute in attrs {
        if let Ok(reference) = select_reference(target, interference, corpus.records(), attribute, rng) {
            return Ok(Some((reference.id.clone(), attribute)));
        }
    }
    Ok(None)
}

/// Assemble model-ready items for one batch of specs.
///
/// Stage 1 items always carry both modalities, with the text prompt naming
/// the attribute the reference audio shares with the target. Stage 2 draws
/// the condition per item and applies dynamic mixing when enabled.
pub fn build_batch(
    corpus: &CorpusIndex,
    specs: &[&MixtureSpec],
    stage: u8,
    epoch: usize,
    cfg: &TrainConfig,
    sep: &SepConfig,
    table: &TemplateTable,
) -> Result<Vec<BatchItem>, TrainError> {
    let mut items = Vec::with_capacity(specs.len());
    let ep = epoch.to_string();
    for spec in specs {
        let id = spec.mixture_id.as_str();

        let spec = if stage == 2 && cfg.dm_enabled {
            let mut rng = stream_rng(cfg.seed, &["dm", id, &ep]);
            let (remixed, changed) = dynamic_remix(spec, corpus, cfg.onset_max_frac, &mut rng)?;
            if !changed {
                log::debug!("{}: no same-tuple alternative, keeping original interference", id);
            }
            remixed
        } else {
            (*spec).clone()
        };

        let synth = synthesize_mixture(corpus, &spec)?;
        if synth.mixture.duration_s() < cfg.min_signal_s {
            log::warn!("{}: mixture shorter than {} s, skipped", id, cfg.min_signal_s);
            continue;
        }

        let crop_len = aligned_crop_len(synth.mixture.len(), cfg.max_signal_s, sep);
        // Crop inside the target's span: past its end the reference is all
        // zeros (interference overhang) and SI-SDR is undefined there.
        let target_len = (corpus.get(&spec.target_id)?.duration_s * SAMPLE_RATE as f64) as usize;
        let span = synth.mixture.len().min(target_len.max(crop_len));
        let mut crop_rng = stream_rng(cfg.seed, &["crop", id, &ep]);
        let offset = if span > crop_len { crop_rng.gen_range(0..=span - crop_len) } else { 0 };
        let mixture = Waveform::new(synth.mixture.samples[offset..offset + crop_len].to_vec());
        let reference = Waveform::new(synth.target_ref.samples[offset..offset + crop_len].to_vec());
        if reference.samples.iter().map(|s| s * s).sum::<f64>() <= super::sisdr::EPS_ENERGY {
            log::warn!("{}: reference crop carries no target energy, skipped", id);
            continue;
        }

        let condition = {
            let mut rng = stream_rng(cfg.seed, &["cond", id, &ep]);
            sample_clue_condition(stage, &mut rng, cfg)
        };

        let mut clue_rng = stream_rng(cfg.seed, &["clue", id, &ep]);
        let reference_audio = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<Option<(Waveform, crate::dataset::AttributeKind)>, TrainError> {
            match clue_reference(&spec, corpus, rng)? {
                Some((rid, attr)) => {
                    let w = corpus.load_waveform(&rid)?;
                    let len = aligned_crop_len(w.len(), cfg.max_signal_s, sep);
                    Ok(Some((Waveform::new(w.samples[..len].to_vec()), attr)))
                }
                None => Ok(None),
            }
        };

        let (audio, text): (Option<Waveform>, Option<String>) = match condition {
            ClueCondition::TextAudio => match reference_audio(&mut clue_rng)? {
                Some((w, attr)) => {
                    let text = if spec.clue.kind == ClueKind::TypeIiReference {
                        spec.clue.text.clone()
                    } else {
                        // Stage-1 style prompt: name the attribute the
                        // reference shares with the target.
                        render_type_ii_prompt(table, attr, &mut clue_rng)
                    };
                    (Some(w), Some(text))
                }
                None => {
                    log::warn!("{}: no valid reference audio, degrading to text-only", id);
                    (None, Some(type_i_text(&spec, corpus, table, &mut clue_rng)?))
                }
            },
            ClueCondition::TextOnly => (None, Some(type_i_text(&spec, corpus, table, &mut clue_rng)?)),
            ClueCondition::AudioOnly => match reference_audio(&mut clue_rng)? {
                Some((w, _)) => (Some(w), None),
                None => {
                    log::warn!("{}: no valid reference audio, degrading to text-only", id);
                    (None, Some(type_i_text(&spec, corpus, table, &mut clue_rng)?))
                }
            },
        };

        let clue = crate::clue::resolve_missing_modality(&crate::clue::ClueBundle { audio, text })?;
        items.push(BatchItem {
            mixture_id: spec.mixture_id.clone(),
            mixture,
            reference,
            clue,
            condition,
        });
    }
    Ok(items)
}

/// A standalone style description of the target: the mixture's own type I
/// clue when it has one, otherwise a freshly rendered description.
fn type_i_text(
    spec: &MixtureSpec,
    corpus: &CorpusIndex,
    table: &TemplateTable,
    rng: &mut impl Rng,
) -> Result<String, TrainError> {
    if spec.clue.kind == ClueKind::TypeIText {
        return Ok(spec.clue.text.clone());
    }
    let target = corpus.get(&spec.target_id)?;
    let length = *[LengthClass::Long, LengthClass::Mid, LengthClass::Short].choose(rng).unwrap();
    Ok(render_text_clue_with(table, &target.attributes, length, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_specs, synth_toy_corpus, MixGenConfig};

    fn setup(dir: &std::path::Path) -> (CorpusIndex, Vec<MixtureSpec>) {
        let recs = synth_toy_corpus(dir, 4, 8, 17).unwrap();
        let corpus = CorpusIndex::new(dir, recs);
        let cfg = MixGenConfig { n_mixtures: 12, seed: 6, ..MixGenConfig::default() };
        let specs = generate_specs(&corpus, &cfg).unwrap();
        (corpus, specs)
    }

    #[test]
    fn condition_ratio_over_many_draws() {
        let cfg = TrainConfig::default();
        let mut rng = stream_rng(1, &["ratio"]);
        let n = 50_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            match sample_clue_condition(2, &mut rng, &cfg) {
                ClueCondition::TextAudio => counts[0] += 1,
                ClueCondition::TextOnly => counts[1] += 1,
                ClueCondition::AudioOnly => counts[2] += 1,
            }
        }
        let p = [counts[0] as f64 / n as f64, counts[1] as f64 / n as f64, counts[2] as f64 / n as f64];
        assert!((p[0] - 0.4).abs() < 0.01, "{:?}", p);
        assert!((p[1] - 0.4).abs() < 0.01, "{:?}", p);
        assert!((p[2] - 0.2).abs() < 0.01, "{:?}", p);
    }

    #[test]
    fn stage1_is_always_bimodal() {
        let cfg = TrainConfig::default();
        let mut rng = stream_rng(2, &["stage1"]);
        for _ in 0..100 {
            assert_eq!(sample_clue_condition(1, &mut rng, &cfg), ClueCondition::TextAudio);
        }
    }

    #[test]
    fn condition_sequence_is_reproducible() {
        let cfg = TrainConfig::default();
        let seq = |seed| {
            let mut rng = stream_rng(seed, &["seq"]);
            (0..50).map(|_| sample_clue_condition(2, &mut rng, &cfg)).collect::<Vec<_>>()
        };
        assert_eq!(seq(5), seq(5));
        assert_ne!(seq(5), seq(6));
    }

    #[test]
    fn stage1_batches_carry_both_modalities() {
        let dir = tempfile::tempdir().unwrap();
        let (corpus, specs) = setup(dir.path());
        let cfg = TrainConfig { seed: 3, ..TrainConfig::default() };
        let sep = SepConfig::default();
        let refs: Vec<&MixtureSpec> = specs.iter().collect();
        let items = build_batch(&corpus, &refs, 1, 0, &cfg, &sep, &TemplateTable::builtin()).unwrap();
        assert_eq!(items.len(), refs.len());
        for it in &items {
            assert_eq!(it.condition, ClueCondition::TextAudio);
            assert!(it.clue.audio.is_some(), "{} missing audio clue", it.mixture_id);
            assert!(!it.clue.text.is_empty());
            assert!(!it.clue.audio_is_placeholder);
        }
    }

    #[test]
    fn crops_align_mixture_and_reference() {
        let dir = tempfile::tempdir().unwrap();
        let (corpus, specs) = setup(dir.path());
        let cfg = TrainConfig { max_signal_s: 1.0, seed: 4, ..TrainConfig::default() };
        let sep = SepConfig::default();
        let refs: Vec<&MixtureSpec> = specs.iter().take(3).collect();
        let items = build_batch(&corpus, &refs, 1, 0, &cfg, &sep, &TemplateTable::builtin()).unwrap();
        for it in &items {
            assert_eq!(it.mixture.len(), it.reference.len());
            assert!(it.mixture.len() <= 8000);
            // decoder-exact length: (len - K) divisible by stride
            assert_eq!((it.mixture.len() - sep.kernel) % sep.stride, 0);
            // the same crop offset applied to both: mixture - reference must
            // equal the aligned interference, so target+interference == mixture
            // wherever the interference is silent the two agree exactly.
            let all_equal_len = it.mixture.samples.len() == it.reference.samples.len();
            assert!(all_equal_len);
        }
    }

    #[test]
    fn audio_only_items_use_pseudo_text() {
        let dir = tempfile::tempdir().unwrap();
        let (corpus, specs) = setup(dir.path());
        // Force audio-only by zeroing the other weights.
        let cfg = TrainConfig { clue_ratio: (0, 0, 1), seed: 5, ..TrainConfig::default() };
        let sep = SepConfig::default();
        let refs: Vec<&MixtureSpec> = specs.iter().take(4).collect();
        let items = build_batch(&corpus, &refs, 2, 0, &cfg, &sep, &TemplateTable::builtin()).unwrap();
        for it in &items {
            assert_eq!(it.condition, ClueCondition::AudioOnly);
            assert_eq!(it.clue.text, crate::clue::PSEUDO_TEXT);
        }
    }

    #[test]
    fn dynamic_mixing_changes_items_between_epochs() {
        let dir = tempfile::tempdir().unwrap();
        let recs = synth_toy_corpus(dir.path(), 2, 16, 18).unwrap();
        let corpus = CorpusIndex::new(dir.path(), recs);
        let gen = MixGenConfig { n_mixtures: 8, seed: 7, ..MixGenConfig::default() };
        let specs = generate_specs(&corpus, &gen).unwrap();
        let cfg = TrainConfig { dm_enabled: true, seed: 6, ..TrainConfig::default() };
        let sep = SepConfig::default();
        let refs: Vec<&MixtureSpec> = specs.iter().collect();
        let e0 = build_batch(&corpus, &refs, 2, 0, &cfg, &sep, &TemplateTable::builtin()).unwrap();
        let e1 = build_batch(&corpus, &refs, 2, 1, &cfg, &sep, &TemplateTable::builtin()).unwrap();
        let differs = e0
            .iter()
            .zip(&e1)
            .any(|(a, b)| a.mixture.samples != b.mixture.samples);
        assert!(differs, "dynamic mixing produced identical epochs");
        // while the same epoch rebuilds identically
        let e0b = build_batch(&corpus, &refs, 2, 0, &cfg, &sep, &TemplateTable::builtin()).unwrap();
        for (a, b) in e0.iter().zip(&e0b) {
            assert_eq!(a.mixture.samples, b.mixture.samples);
            assert_eq!(a.clue.text, b.clue.text);
        }
    }
}
