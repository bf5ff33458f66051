//! Mixture recipe generation, synthesis, dynamic remixing, and statistics.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{measure_lufs, mix_at_onset, read_wav, snr_lu, Waveform, SAMPLE_RATE};
use crate::seeding::stream_rng;

use super::pairing::{pair_interference, select_reference};
use super::templates::{render_text_clue_with, render_type_ii_prompt, TemplateTable};
use super::types::{
    AttributeKind, ClueKind, ClueSpec, LengthClass, MixtureSpec, Split, UtteranceRecord, ALL_ATTRIBUTES,
};
use super::DatasetError;

/// Corpus records indexed by id, rooted at the directory record paths are
/// relative to.
pub struct CorpusIndex {
    root: PathBuf,
    records: Vec<UtteranceRecord>,
    by_id: HashMap<String, usize>,
}

impl CorpusIndex {
    pub fn new(root: impl Into<PathBuf>, records: Vec<UtteranceRecord>) -> CorpusIndex {
        let by_id = records.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        CorpusIndex { root: root.into(), records, by_id }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Result<&UtteranceRecord, DatasetError> {
        self.by_id
            .get(id)
            .map(|&i| &self.records[i])
            .ok_or_else(|| DatasetError::UnknownUtterance(id.to_string()))
    }

    pub fn load_waveform(&self, id: &str) -> Result<Waveform, DatasetError> {
        let rec = self.get(id)?;
        read_wav(self.root.join(&rec.path)).map_err(|e| DatasetError::Dsp { context: id.to_string(), source: e })
    }

    /// Utterances (other than `exclude_id`) with exactly the same six-attribute tuple.
    pub fn same_tuple_alternatives(&self, of: &UtteranceRecord, exclude_id: &str) -> Vec<&UtteranceRecord> {
        self.records
            .iter()
            .filter(|r| r.id != exclude_id && r.id != of.id && r.attributes == of.attributes)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixGenConfig {
    pub n_mixtures: usize,
    pub lufs_min: f64,
    pub lufs_max: f64,
    /// Onsets are drawn uniformly in [0, onset_max_frac * target length].
    pub onset_max_frac: f64,
    /// Fraction of mixtures that get a type II (reference audio) clue.
    pub type_ii_fraction: f64,
    pub seed: u64,
}

impl Default for MixGenConfig {
    fn default() -> Self {
        MixGenConfig {
            n_mixtures: 1000,
            lufs_min: super::types::LUFS_MIN,
            lufs_max: super::types::LUFS_MAX,
            onset_max_frac: 0.5,
            type_ii_fraction: 0.5,
            seed: 0,
        }
    }
}

/// Generate mixture recipes over the corpus. Targets cycle through the
/// corpus so every utterance appears; splits are assigned afterwards with
/// [`super::splits::make_splits`].
pub fn generate_specs(corpus: &CorpusIndex, cfg: &MixGenConfig) -> Result<Vec<MixtureSpec>, DatasetError> {
    let records = corpus.records();
    if records.len() < 2 {
        return Err(DatasetError::Validation("need at least 2 utterances".to_string()));
    }
    let table = TemplateTable::builtin();
    let mut specs = Vec::with_capacity(cfg.n_mixtures);
    let mut unpairable = 0usize;
    for i in 0..cfg.n_mixtures {
        let target = &records[i % records.len()];
        let mut rng = stream_rng(cfg.seed, &["mixgen", &i.to_string()]);
        let interference = match pair_interference(target, records, &mut rng) {
            Ok(r) => r,
            Err(_) => {
                unpairable += 1;
                continue;
            }
        };
        let target_lufs = rng.gen_range(cfg.lufs_min..cfg.lufs_max);
        let interference_lufs = rng.gen_range(cfg.lufs_min..cfg.lufs_max);
        let target_len = (target.duration_s * SAMPLE_RATE as f64) as usize;
        let onset = rng.gen_range(0..=((target_len as f64 * cfg.onset_max_frac) as usize));

        let clue = build_clue(&table, target, interference, records, cfg.type_ii_fraction, &mut rng);
        specs.push(MixtureSpec {
            mixture_id: format!("mix_{:06}", i),
            target_id: target.id.clone(),
            interference_id: interference.id.clone(),
            target_lufs,
            interference_lufs,
            onset,
            clue,
            split: Split::Train,
            clipping_gain: 1.0,
        });
    }
    if unpairable > 0 {
        log::warn!("{} targets had no pairable interference", unpairable);
    }
    if specs.is_empty() {
        return Err(DatasetError::PairingExhausted { what: "interference", target: "all targets".to_string() });
    }
    Ok(specs)
}

/// Choose a clue for one mixture. Type II needs an attribute that separates
/// target from interference and a reference utterance realizing it; when no
/// attribute works the mixture falls back to a type I description.
fn build_clue(
    table: &TemplateTable,
    target: &UtteranceRecord,
    interference: &UtteranceRecord,
    pool: &[UtteranceRecord],
    type_ii_fraction: f64,
    rng: &mut impl Rng,
) -> ClueSpec {
    if rng.gen_bool(type_ii_fraction) {
        let mut attrs: Vec<AttributeKind> = target
            .attributes
            .differing(&interference.attributes)
            .into_iter()
            .collect();
        attrs.shuffle(rng);
        for attribute in attrs {
            if let Ok(reference) = select_reference(target, interference, pool, attribute, rng) {
                return ClueSpec {
                    kind: ClueKind::TypeIiReference,
                    text: render_type_ii_prompt(table, attribute, rng),
                    length_class: LengthClass::Mid,
                    reference_id: Some(reference.id.clone()),
                    highlighted_attribute: Some(attribute),
                };
            }
        }
    }
    let length = *[LengthClass::Long, LengthClass::Mid, LengthClass::Short]
        .choose(rng)
        .unwrap();
    ClueSpec {
        kind: ClueKind::TypeIText,
        text: render_text_clue_with(table, &target.attributes, length, rng),
        length_class: length,
        reference_id: None,
        highlighted_attribute: None,
    }
}

/// Standalone validator: every emitted spec must satisfy the attribute
/// invariants, the clue invariants, and the loudness range.
pub fn validate_specs(corpus: &CorpusIndex, specs: &[MixtureSpec]) -> Result<(), Vec<String>> {
    let mut violations = Vec::new();
    for s in specs {
        if let Err(e) = validate_spec(corpus, s) {
            violations.push(format!("{}: {}", s.mixture_id, e));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

fn validate_spec(corpus: &CorpusIndex, spec: &MixtureSpec) -> Result<(), String> {
    let target = corpus.get(&spec.target_id).map_err(|e| e.to_string())?;
    let interference = corpus.get(&spec.interference_id).map_err(|e| e.to_string())?;
    if target.attributes.differing(&interference.attributes).is_empty() {
        return Err("target and interference share all six attributes".to_string());
    }
    spec.clue.validate().map_err(|e| e.to_string())?;
    if spec.clue.kind == ClueKind::TypeIiReference {
        let reference = corpus
            .get(spec.clue.reference_id.as_deref().unwrap())
            .map_err(|e| e.to_string())?;
        let attr = spec.clue.highlighted_attribute.unwrap();
        let (t, i, r) = (
            target.attributes.get(attr),
            interference.attributes.get(attr),
            reference.attributes.get(attr),
        );
        if r != t || r == i {
            return Err(format!(
                "reference {} on {:?}: value {:?} must equal target {:?} and differ from interference {:?}",
                reference.id, attr, r, t, i
            ));
        }
    }
    for lufs in [spec.target_lufs, spec.interference_lufs] {
        if !(super::types::LUFS_MIN..=super::types::LUFS_MAX).contains(&lufs) {
            return Err(format!("lufs {} outside corpus range", lufs));
        }
    }
    Ok(())
}

/// Realized per-mixture numbers recorded next to the spec in metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealizedMixture {
    #[serde(flatten)]
    pub spec: MixtureSpec,
    pub snr_lu: f64,
    pub snr_energy_db: f64,
    pub target_gain: f64,
    pub interference_gain: f64,
}

/// Synthesized audio for one recipe.
pub struct SynthesizedMixture {
    pub mixture: Waveform,
    pub target_ref: Waveform,
    pub interference_ref: Waveform,
    pub clue_audio: Option<Waveform>,
    pub realized: RealizedMixture,
}

/// Render a recipe to audio: rescale both sources to their loudness
/// targets, mix at the onset, apply the joint clipping guard, and load the
/// reference clue audio when the clue has one.
pub fn synthesize_mixture(corpus: &CorpusIndex, spec: &MixtureSpec) -> Result<SynthesizedMixture, DatasetError> {
    let ctx = |e: crate::dsp::DspError| DatasetError::Dsp { context: spec.mixture_id.clone(), source: e };
    let target = corpus.load_waveform(&spec.target_id)?;
    let interference = corpus.load_waveform(&spec.interference_id)?;

    let t_meas = measure_lufs(&target).map_err(ctx)?;
    let i_meas = measure_lufs(&interference).map_err(ctx)?;
    let target_gain = 10f64.powf((spec.target_lufs - t_meas.0) / 20.0);
    let interference_gain = 10f64.powf((spec.interference_lufs - i_meas.0) / 20.0);
    let t_scaled = target.scaled(target_gain);
    let i_scaled = interference.scaled(interference_gain);

    let mix = mix_at_onset(&t_scaled, &i_scaled, spec.onset);
    let clue_audio = match &spec.clue.reference_id {
        Some(id) => Some(corpus.load_waveform(id)?),
        None => None,
    };

    let mut spec_out = spec.clone();
    spec_out.clipping_gain = mix.clipping_gain;
    Ok(SynthesizedMixture {
        realized: RealizedMixture {
            snr_lu: snr_lu(spec.target_lufs, spec.interference_lufs),
            snr_energy_db: crate::dsp::snr_energy_db(&mix.target_ref, &mix.interference_ref),
            target_gain,
            interference_gain,
            spec: spec_out,
        },
        mixture: mix.mixture,
        target_ref: mix.target_ref,
        interference_ref: mix.interference_ref,
        clue_audio,
    })
}

/// On-the-fly interference replacement for training augmentation.
///
/// The substitute must carry exactly the original interference's attribute
/// tuple so the clue stays valid; the onset is redrawn. When no alternative
/// exists the original spec is kept and `false` is returned.
pub fn dynamic_remix(
    spec: &MixtureSpec,
    corpus: &CorpusIndex,
    onset_max_frac: f64,
    rng: &mut impl Rng,
) -> Result<(MixtureSpec, bool), DatasetError> {
    let original = corpus.get(&spec.interference_id)?;
    let alternatives = corpus.same_tuple_alternatives(original, &spec.target_id);
    if alternatives.is_empty() {
        return Ok((spec.clone(), false));
    }
    let pick = alternatives[rng.gen_range(0..alternatives.len())];
    let target = corpus.get(&spec.target_id)?;
    let target_len = (target.duration_s * SAMPLE_RATE as f64) as usize;
    let mut out = spec.clone();
    out.interference_id = pick.id.clone();
    out.onset = rng.gen_range(0..=((target_len as f64 * onset_max_frac) as usize));
    Ok((out, true))
}

/// Aggregate statistics for a generated set of recipes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_mixtures: usize,
    pub split_counts: HashMap<String, usize>,
    pub snr_lu_mean: f64,
    pub snr_lu_std: f64,
    /// Kolmogorov-Smirnov statistic of the loudness draws against uniform.
    pub lufs_ks_statistic: f64,
    pub constraint_violations: usize,
    pub mean_alternatives_per_target: f64,
    pub clue_type_counts: HashMap<String, usize>,
    pub length_class_counts: HashMap<String, usize>,
}

pub fn compute_stats(corpus: &CorpusIndex, specs: &[MixtureSpec]) -> DatasetStats {
    let snrs: Vec<f64> = specs.iter().map(|s| snr_lu(s.target_lufs, s.interference_lufs)).collect();
    let mean = snrs.iter().sum::<f64>() / snrs.len() as f64;
    let var = snrs.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / snrs.len() as f64;

    let mut draws: Vec<f64> = specs
        .iter()
        .flat_map(|s| [s.target_lufs, s.interference_lufs])
        .collect();
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = (super::types::LUFS_MIN, super::types::LUFS_MAX);
    let n = draws.len() as f64;
    let mut ks = 0.0f64;
    for (i, &x) in draws.iter().enumerate() {
        let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        let e_hi = (i + 1) as f64 / n;
        let e_lo = i as f64 / n;
        ks = ks.max((e_hi - cdf).abs()).max((cdf - e_lo).abs());
    }

    let violations = match validate_specs(corpus, specs) {
        Ok(()) => 0,
        Err(v) => v.len(),
    };

    let mut alt_sum = 0.0;
    for s in specs {
        if let Ok(interference) = corpus.get(&s.interference_id) {
            alt_sum += corpus.same_tuple_alternatives(interference, &s.target_id).len() as f64;
        }
    }

    let mut split_counts = HashMap::new();
    let mut clue_type_counts = HashMap::new();
    let mut length_class_counts = HashMap::new();
    for s in specs {
        *split_counts.entry(format!("{:?}", s.split).to_lowercase()).or_insert(0) += 1;
        let kind = match s.clue.kind {
            ClueKind::TypeIText => "type_i",
            ClueKind::TypeIiReference => "type_ii",
        };
        *clue_type_counts.entry(kind.to_string()).or_insert(0) += 1;
        if s.clue.kind == ClueKind::TypeIText {
            *length_class_counts.entry(s.clue.length_class.as_str().to_string()).or_insert(0) += 1;
        }
    }

    DatasetStats {
        n_mixtures: specs.len(),
        split_counts,
        snr_lu_mean: mean,
        snr_lu_std: var.sqrt(),
        lufs_ks_statistic: ks,
        constraint_violations: violations,
        mean_alternatives_per_target: alt_sum / specs.len() as f64,
        clue_type_counts,
        length_class_counts,
    }
}

/// `ALL_ATTRIBUTES` re-exported for harness code that iterates clue strata.
pub fn attribute_strata() -> &'static [AttributeKind] {
    &ALL_ATTRIBUTES
}
