//! Clue-discrimination diagnostic.
//!
//! For mixtures whose two sources differ in exactly one attribute, the
//! model is run twice — once clued toward each source — and counted correct
//! when each extraction lands closer (higher SI-SDR) to its clued source.
//! Exact ties score half. Chance is 0.5; attribute-aware extraction pushes
//! toward 1.0.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::clue::{ClueBundle, TextEncoderPort};
use crate::dataset::templates::{render_attribute_text, render_type_ii_prompt_indexed, TemplateTable};
use crate::dataset::{select_reference, AttributeKind, CorpusIndex, UtteranceRecord};
use crate::dsp::{mix_at_onset, rescale_to_lufs, Waveform, SAMPLE_RATE};
use crate::seeding::stream_rng;
use crate::sep::SepModel;
use crate::train::{si_sdr, ClueCondition};

use super::EvalError;

#[derive(Debug, Clone)]
pub struct DiscriminationPair {
    pub attribute: AttributeKind,
    pub mixture: Waveform,
    pub source_a: Waveform,
    pub source_b: Waveform,
    pub clue_a: ClueBundle,
    pub clue_b: ClueBundle,
}

fn clue_for(
    source: &UtteranceRecord,
    other: &UtteranceRecord,
    corpus: &CorpusIndex,
    attribute: AttributeKind,
    condition: ClueCondition,
    table: &TemplateTable,
    rng: &mut impl Rng,
) -> Result<Option<ClueBundle>, EvalError> {
    let text = render_attribute_text(table, &source.attributes, attribute);
    let mut audio = || -> Result<Option<Waveform>, EvalError> {
        match select_reference(source, other, corpus.records(), attribute, rng) {
            Ok(reference) => Ok(Some(corpus.load_waveform(&reference.id)?)),
            Err(_) => Ok(None),
        }
    };
    Ok(match condition {
        ClueCondition::TextOnly => Some(ClueBundle::text_only(text)),
        ClueCondition::AudioOnly => audio()?.map(ClueBundle::audio_only),
        ClueCondition::TextAudio => {
            let prompt = render_type_ii_prompt_indexed(table, attribute, 0);
            audio()?.map(|w| ClueBundle::both(w, prompt))
        }
    })
}

/// Build up to `n` pairs whose sources differ in exactly `attribute`, with
/// clues for both sides under the given condition. Pairs where no valid
/// reference audio exists are skipped.
pub fn generate_discrimination_pairs(
    corpus: &CorpusIndex,
    attribute: AttributeKind,
    condition: ClueCondition,
    n: usize,
    seed: u64,
) -> Result<Vec<DiscriminationPair>, EvalError> {
    let table = TemplateTable::builtin();
    let records = corpus.records();
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for i in 0..records.len() {
        for j in (i + 1)..records.len() {
            if records[i].attributes.differing(&records[j].attributes) == [attribute] {
                candidates.push((i, j));
            }
        }
    }
    let mut rng = stream_rng(seed, &["discrimination", attribute.display_word()]);
    candidates.shuffle(&mut rng);

    let mut pairs = Vec::new();
    for (i, j) in candidates {
        if pairs.len() >= n {
            break;
        }
        let (a, b) = (&records[i], &records[j]);
        let clue_a = clue_for(a, b, corpus, attribute, condition, &table, &mut rng)?;
        let clue_b = clue_for(b, a, corpus, attribute, condition, &table, &mut rng)?;
        let (Some(clue_a), Some(clue_b)) = (clue_a, clue_b) else { continue };

        let wav_a = corpus.load_waveform(&a.id)?;
        let wav_b = corpus.load_waveform(&b.id)?;
        let lufs_a = rng.gen_range(-33.0..-25.0);
        let lufs_b = rng.gen_range(-33.0..-25.0);
        let (scaled_a, _) = rescale_to_lufs(&wav_a, lufs_a).map_err(to_eval)?;
        let (scaled_b, _) = rescale_to_lufs(&wav_b, lufs_b).map_err(to_eval)?;
        let onset = rng.gen_range(0..=(scaled_a.len() / 4));
        let mix = mix_at_onset(&scaled_a, &scaled_b, onset);

        // Keep the discrimination window inside both sources' span.
        let span = scaled_a.len().min(onset + scaled_b.len()).min(mix.mixture.len());
        let cap = span.min(2 * SAMPLE_RATE as usize);
        let crop = |w: &Waveform| Waveform::new(w.samples[..cap].to_vec());
        pairs.push(DiscriminationPair {
            attribute,
            mixture: crop(&mix.mixture),
            source_a: crop(&mix.target_ref),
            source_b: crop(&mix.interference_ref),
            clue_a,
            clue_b,
        });
    }
    Ok(pairs)
}

fn to_eval(e: crate::dsp::DspError) -> EvalError {
    EvalError::Dataset(crate::dataset::DatasetError::Dsp { context: "discrimination".to_string(), source: e })
}

fn side_score(est: &Waveform, own: &Waveform, other: &Waveform) -> Result<f64, EvalError> {
    let to_own = si_sdr(&est.samples, &own.samples)?;
    let to_other = si_sdr(&est.samples, &other.samples)?;
    Ok(if to_own > to_other {
        1.0
    } else if to_own < to_other {
        0.0
    } else {
        0.5
    })
}

/// Fraction of extractions that land closer to their clued source.
pub fn clue_discrimination(
    model: &SepModel,
    pairs: &[DiscriminationPair],
    port: &dyn TextEncoderPort,
) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Config("no discrimination pairs".to_string()));
    }
    let mut total = 0.0;
    for p in pairs {
        let est_a = model.extract(&p.mixture, &p.clue_a, port)?;
        let est_b = model.extract(&p.mixture, &p.clue_b, port)?;
        let sa = side_score(&est_a, &p.source_a, &p.source_b)?;
        let sb = side_score(&est_b, &p.source_b, &p.source_a)?;
        total += (sa + sb) / 2.0;
    }
    Ok(total / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clue::HashTextEncoder;
    use crate::dataset::synth_toy_corpus;
    use crate::sep::{ModelConfig, SepConfig, SepModel};

    fn small_model(seed: u64) -> SepModel {
        SepModel::new(ModelConfig {
            sep: SepConfig {
                channels: 8,
                kernel: 32,
                stride: 16,
                chunk: 10,
                heads: 2,
                ff_dim: 16,
                ..SepConfig::default()
            },
            init_seed: seed,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn pairs_differ_in_exactly_the_requested_attribute() {
        let dir = tempfile::tempdir().unwrap();
        let recs = synth_toy_corpus(dir.path(), 2, 10, 60).unwrap();
        let corpus = CorpusIndex::new(dir.path(), recs);
        let pairs =
            generate_discrimination_pairs(&corpus, AttributeKind::Emotion, ClueCondition::TextOnly, 5, 1)
                .unwrap();
        assert!(!pairs.is_empty());
        for p in &pairs {
            assert_eq!(p.attribute, AttributeKind::Emotion);
            assert_eq!(p.mixture.len(), p.source_a.len());
            assert_eq!(p.mixture.len(), p.source_b.len());
        }
    }

    #[test]
    fn identical_clues_score_exactly_half() {
        let dir = tempfile::tempdir().unwrap();
        let recs = synth_toy_corpus(dir.path(), 2, 8, 61).unwrap();
        let corpus = CorpusIndex::new(dir.path(), recs);
        let mut pairs =
            generate_discrimination_pairs(&corpus, AttributeKind::Tempo, ClueCondition::TextOnly, 3, 2)
                .unwrap();
        for p in &mut pairs {
            p.clue_b = p.clue_a.clone();
        }
        let model = small_model(0);
        let port = HashTextEncoder::new(0);
        let acc = clue_discrimination(&model, &pairs, &port).unwrap();
        assert!((acc - 0.5).abs() < 1e-12, "got {}", acc);
    }

    #[test]
    fn untrained_model_sits_near_chance() {
        let dir = tempfile::tempdir().unwrap();
        let recs = synth_toy_corpus(dir.path(), 4, 14, 62).unwrap();
        let corpus = CorpusIndex::new(dir.path(), recs);
        let mut pairs = Vec::new();
        for attr in [AttributeKind::Emotion, AttributeKind::Tempo, AttributeKind::SpeakerId] {
            pairs.extend(
                generate_discrimination_pairs(&corpus, attr, ClueCondition::TextOnly, 70, 3).unwrap(),
            );
        }
        assert!(pairs.len() >= 200, "only {} pairs", pairs.len());
        let model = small_model(9);
        let port = HashTextEncoder::new(0);
        let acc = clue_discrimination(&model, &pairs, &port).unwrap();
        assert!((acc - 0.5).abs() <= 0.1, "untrained accuracy {}", acc);
    }
}
