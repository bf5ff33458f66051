//! Synthetic labeled corpus where every style attribute is audible.
//!
//! The point is a self-contained training/evaluation corpus whose attribute
//! labels map to measurable signal properties, so attribute-conditioned
//! extraction is learnable and checkable without any external speech data:
//!
//! - pitch class -> fundamental band (high/neutral/low are far apart)
//! - emotion -> sub-band within the pitch band plus a timbre code band
//! - speaker -> harmonic amplitude template (alternating speakers emphasize
//!   complementary harmonics, so same-pitch speakers stay separable)
//! - tempo -> amplitude-modulation rate
//! - gender / accent -> dedicated code bands above the harmonic range
//!
//! All randomness is drawn from per-utterance streams, so a fixed seed
//! reproduces the corpus byte for byte.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;

use crate::dsp::{write_wav, Waveform, SAMPLE_RATE};
use crate::seeding::stream_rng;

use super::types::{Pitch, StyleAttributes, Tempo, UtteranceRecord};
use super::DatasetError;

const HARMONIC_TEMPLATE: [f64; 6] = [1.0, 0.85, 0.7, 0.55, 0.4, 0.3];
const HARMONIC_CEILING_HZ: f64 = 1700.0;
const CODE_AMP: f64 = 0.12;
const CODE_SPREAD_HZ: f64 = 25.0;
const AM_DEPTH: f64 = 0.75;
const PEAK_NORM: f64 = 0.5;

fn pitch_band(p: Pitch) -> (f64, f64) {
    match p {
        Pitch::High => (295.0, 355.0),
        Pitch::Neutral => (175.0, 225.0),
        Pitch::Low => (88.0, 116.0),
    }
}

/// Emotion narrows the fundamental to a sub-band: sad sits low, happy high.
fn emotion_subband(band: (f64, f64), emotion: &str) -> (f64, f64) {
    let (lo, hi) = band;
    let w = hi - lo;
    match emotion {
        "sad" => (lo, lo + 0.4 * w),
        "happy" => (lo + 0.6 * w, hi),
        _ => (lo + 0.3 * w, lo + 0.7 * w),
    }
}

fn am_rate(t: Tempo) -> f64 {
    match t {
        Tempo::Fast => 6.5,
        Tempo::Neutral => 4.0,
        Tempo::Slow => 1.8,
    }
}

fn code_center(kind: &str, value: &str) -> f64 {
    match (kind, value) {
        ("emotion", "happy") => 2000.0,
        ("emotion", "sad") => 2250.0,
        ("emotion", _) => 2125.0,
        ("gender", "male") => 2500.0,
        ("gender", "female") => 2750.0,
        ("gender", _) => 2625.0,
        ("accent", "us") => 3000.0,
        ("accent", "uk") => 3250.0,
        _ => 3125.0,
    }
}

/// Per-speaker harmonic emphasis: even-indexed speakers keep odd harmonics
/// strong, odd-indexed speakers keep even harmonics strong. Deterministic
/// jitter makes templates unique beyond the parity split.
fn speaker_template(speaker_index: usize, seed: u64) -> [f64; 6] {
    let mut rng = stream_rng(seed, &["speaker-template", &speaker_index.to_string()]);
    let mut t = HARMONIC_TEMPLATE;
    for (h, a) in t.iter_mut().enumerate() {
        let strong = (h % 2 == 0) == (speaker_index % 2 == 0);
        let emphasis = if strong { 1.0 } else { 0.35 };
        let jitter = 1.0 + rng.gen_range(-0.1..0.1);
        *a *= emphasis * jitter;
    }
    t
}

/// Synthesize one utterance waveform for the given attributes.
pub fn toy_utterance_waveform(
    attrs: &StyleAttributes,
    speaker_index: usize,
    duration_s: f64,
    seed: u64,
    rng: &mut impl Rng,
) -> Waveform {
    let n = (duration_s * SAMPLE_RATE as f64).round() as usize;
    let fs = SAMPLE_RATE as f64;

    let (lo, hi) = emotion_subband(pitch_band(attrs.pitch), &attrs.emotion);
    let f0 = rng.gen_range(lo..hi);
    let template = speaker_template(speaker_index, seed);

    // (frequency, amplitude, phase) for every partial
    let mut partials: Vec<(f64, f64, f64)> = Vec::new();
    for (h, &amp) in template.iter().enumerate() {
        let freq = f0 * (h + 1) as f64;
        if freq > HARMONIC_CEILING_HZ {
            break;
        }
        partials.push((freq, amp, rng.gen_range(0.0..2.0 * PI)));
    }
    for (kind, value) in [
        ("emotion", attrs.emotion.as_str()),
        ("gender", attrs.gender.as_str()),
        ("accent", attrs.accent.as_str()),
    ] {
        let c = code_center(kind, value);
        for f in [c - CODE_SPREAD_HZ, c + CODE_SPREAD_HZ] {
            partials.push((f, CODE_AMP, rng.gen_range(0.0..2.0 * PI)));
        }
    }

    let rate = am_rate(attrs.tempo);
    let am_phase = rng.gen_range(0.0..2.0 * PI);
    let mut samples = vec![0.0f64; n];
    for (i, s) in samples.iter_mut().enumerate() {
        let t = i as f64 / fs;
        let mut v = 0.0;
        for &(f, a, ph) in &partials {
            v += a * (2.0 * PI * f * t + ph).sin();
        }
        let env = 1.0 - AM_DEPTH * (0.5 + 0.5 * (2.0 * PI * rate * t + am_phase).sin());
        *s = v * env;
    }
    let peak = samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    if peak > 0.0 {
        let g = PEAK_NORM / peak;
        for s in &mut samples {
            *s *= g;
        }
    }
    Waveform::new(samples)
}

/// Attribute tuple for speaker `i`: two alternating families that differ in
/// gender, accent, and pitch class.
pub fn toy_speaker_attrs(i: usize) -> (String, &'static str, &'static str, Pitch) {
    let id = format!("spk{}", i);
    if i % 2 == 0 {
        (id, "female", "us", Pitch::High)
    } else {
        (id, "male", "uk", Pitch::Low)
    }
}

/// Generate the corpus: WAV files under `out_dir/wav/` plus the returned
/// records (paths relative to `out_dir`).
pub fn synth_toy_corpus(
    out_dir: &Path,
    n_speakers: usize,
    utts_per_speaker: usize,
    seed: u64,
) -> Result<Vec<UtteranceRecord>, DatasetError> {
    if n_speakers < 2 {
        return Err(DatasetError::Validation("need at least 2 speakers".to_string()));
    }
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir)
        .map_err(|e| DatasetError::Io { path: wav_dir.display().to_string(), source: e })?;

    let emotions = ["happy", "sad"];
    let tempos = [Tempo::Fast, Tempo::Slow];
    let mut records = Vec::with_capacity(n_speakers * utts_per_speaker);
    for si in 0..n_speakers {
        let (speaker_id, gender, accent, pitch) = toy_speaker_attrs(si);
        for ui in 0..utts_per_speaker {
            let id = format!("utt_{}_{}", si, ui);
            let mut rng = stream_rng(seed, &["toy-utt", &speaker_id, &ui.to_string()]);
            let attrs = StyleAttributes {
                speaker_id: speaker_id.clone(),
                emotion: emotions[rng.gen_range(0..emotions.len())].to_string(),
                pitch,
                gender: gender.to_string(),
                accent: accent.to_string(),
                tempo: tempos[rng.gen_range(0..tempos.len())],
            };
            let duration_s = rng.gen_range(3.05..4.0);
            let w = toy_utterance_waveform(&attrs, si, duration_s, seed, &mut rng);
            let rel_path = format!("wav/{}.wav", id);
            write_wav(out_dir.join(&rel_path), &w)
                .map_err(|e| DatasetError::Dsp { context: id.clone(), source: e })?;
            records.push(UtteranceRecord {
                id,
                path: rel_path,
                duration_s: w.duration_s(),
                attributes: attrs,
                transcript: Some(format!("sample utterance {} by {}", ui, speaker_id)),
            });
        }
    }
    Ok(records)
}
