//! Onset-aware mixing with a joint clipping guard.

use super::Waveform;

/// A mixture plus its aligned source references. When the raw sum clips,
/// all three signals carry the same rescale so target/mixture alignment
/// (and therefore SI-SDR) is preserved.
#[derive(Debug, Clone)]
pub struct MixResult {
    pub mixture: Waveform,
    /// Target padded to the mixture length.
    pub target_ref: Waveform,
    /// Interference shifted to its onset and padded to the mixture length.
    pub interference_ref: Waveform,
    /// Gain applied by the clipping guard; 1.0 when the sum never clipped.
    pub clipping_gain: f64,
}

/// Sum `interference` (delayed by `onset` samples) into `target`.
///
/// Output length is `max(len(target), onset + len(interference))`. If the
/// summed peak exceeds 1.0 the mixture and both aligned references are
/// scaled by the same factor.
pub fn mix_at_onset(target: &Waveform, interference: &Waveform, onset: usize) -> MixResult {
    let out_len = target.len().max(onset + interference.len());
    let mut mixture = vec![0.0f64; out_len];
    let mut target_ref = vec![0.0f64; out_len];
    let mut interference_ref = vec![0.0f64; out_len];

    target_ref[..target.len()].copy_from_slice(&target.samples);
    interference_ref[onset..onset + interference.len()].copy_from_slice(&interference.samples);
    for i in 0..out_len {
        mixture[i] = target_ref[i] + interference_ref[i];
    }

    let peak = mixture.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    let clipping_gain = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    if clipping_gain != 1.0 {
        for v in mixture.iter_mut().chain(&mut target_ref).chain(&mut interference_ref) {
            *v *= clipping_gain;
        }
    }

    MixResult {
        mixture: Waveform::new(mixture),
        target_ref: Waveform::new(target_ref),
        interference_ref: Waveform::new(interference_ref),
        clipping_gain,
    }
}

/// Loudness-based SNR: difference of the two rescale targets in LU.
pub fn snr_lu(target_lufs: f64, interference_lufs: f64) -> f64 {
    target_lufs - interference_lufs
}

/// Energy-ratio SNR in dB, logged alongside the loudness-based figure.
pub fn snr_energy_db(target: &Waveform, interference: &Waveform) -> f64 {
    let et: f64 = target.samples.iter().map(|s| s * s).sum();
    let ei: f64 = interference.samples.iter().map(|s| s * s).sum();
    10.0 * (et / ei.max(1e-300)).log10()
}
