//! Integrated loudness per ITU-R BS.1770-4, re-derived for 8 kHz.
//!
//! The standard tabulates K-weighting coefficients for 48 kHz only. Both
//! biquad stages come from analog prototypes, so we run the bilinear
//! transform with the prototype parameters at our sample rate instead
//! (the same route pyloudnorm and ebur128 take for non-48k rates).
//!
//! Pipeline: K-weighting (high shelf + high pass) -> 400 ms blocks with 75%
//! overlap -> mean-square per block -> absolute gate at -70 LKFS ->
//! relative gate at -10 LU -> power mean of surviving blocks.

use super::{DspError, Waveform};

/// Integrated, gated loudness in dB LUFS.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LoudnessLufs(pub f64);

const ABSOLUTE_GATE_LKFS: f64 = -70.0;
const RELATIVE_GATE_LU: f64 = 10.0;
const BLOCK_MS: usize = 400;
const HOP_MS: usize = 100; // 75% overlap
const POWER_OFFSET_DB: f64 = -0.691;

#[derive(Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    /// Stage 1: spherical-head high shelf.
    fn high_shelf(fs: f64) -> Biquad {
        let gain_db = 3.999_843_853_97;
        let q = 0.707_175_236_955_419_3;
        let center_hz = 1_681.974_450_955_531_9;
        let k = (std::f64::consts::PI * center_hz / fs).tan();
        let vh = 10f64.powf(gain_db / 20.0);
        let vb = vh.powf(0.499_666_774_155);
        let a0 = 1.0 + k / q + k * k;
        Biquad {
            b0: (vh + vb * k / q + k * k) / a0,
            b1: 2.0 * (k * k - vh) / a0,
            b2: (vh - vb * k / q + k * k) / a0,
            a1: 2.0 * (k * k - 1.0) / a0,
            a2: (1.0 - k / q + k * k) / a0,
        }
    }

    /// Stage 2: high pass.
    fn high_pass(fs: f64) -> Biquad {
        let q = 0.500_327_037_325_395_3;
        let center_hz = 38.135_470_876_139_82;
        let k = (std::f64::consts::PI * center_hz / fs).tan();
        let a0 = 1.0 + k / q + k * k;
        Biquad {
            b0: 1.0,
            b1: -2.0,
            b2: 1.0,
            a1: 2.0 * (k * k - 1.0) / a0,
            a2: (1.0 - k / q + k * k) / a0,
        }
    }

    fn run(&self, input: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        let mut out = Vec::with_capacity(input.len());
        for &x0 in input {
            let y0 = self.b0 * x0 + self.b1 * x1 + self.b2 * x2 - self.a1 * y1 - self.a2 * y2;
            x2 = x1;
            x1 = x0;
            y2 = y1;
            y1 = y0;
            out.push(y0);
        }
        out
    }

    /// Magnitude response at `freq`, for analytic cross-checks.
    fn magnitude_at(&self, freq: f64, fs: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq / fs;
        let (re1, im1) = (w.cos(), -w.sin());
        let (re2, im2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b0 + self.b1 * re1 + self.b2 * re2,
            self.b1 * im1 + self.b2 * im2,
        );
        let den = (1.0 + self.a1 * re1 + self.a2 * re2, self.a1 * im1 + self.a2 * im2);
        (num.0 * num.0 + num.1 * num.1).sqrt() / (den.0 * den.0 + den.1 * den.1).sqrt()
    }
}

fn block_loudness(power: f64) -> f64 {
    POWER_OFFSET_DB + 10.0 * power.log10()
}

/// K-weighting gain in dB at `freq` for sample rate `fs`. Exposed so tests
/// can check the measurement against the filter response analytically.
pub fn k_weighting_gain_db(freq: f64, fs: f64) -> f64 {
    let m = Biquad::high_shelf(fs).magnitude_at(freq, fs) * Biquad::high_pass(fs).magnitude_at(freq, fs);
    20.0 * m.log10()
}

/// Integrated loudness of a waveform.
///
/// Needs at least one 400 ms block; silence (every block below the absolute
/// gate) is an error rather than a number.
pub fn measure_lufs(w: &Waveform) -> Result<LoudnessLufs, DspError> {
    let fs = w.sample_rate as f64;
    let block = BLOCK_MS * w.sample_rate as usize / 1000;
    let hop = HOP_MS * w.sample_rate as usize / 1000;
    if w.len() < block {
        return Err(DspError::TooShort { got: w.len(), need: block });
    }

    let weighted = Biquad::high_pass(fs).run(&Biquad::high_shelf(fs).run(&w.samples));

    let mut powers = Vec::new();
    let mut start = 0;
    while start + block <= weighted.len() {
        let p = weighted[start..start + block].iter().map(|v| v * v).sum::<f64>() / block as f64;
        powers.push(p);
        start += hop;
    }

    let above_absolute: Vec<f64> = powers
        .iter()
        .copied()
        .filter(|&p| p > 0.0 && block_loudness(p) > ABSOLUTE_GATE_LKFS)
        .collect();
    if above_absolute.is_empty() {
        return Err(DspError::NoGatedBlocks);
    }

    let mean1 = above_absolute.iter().sum::<f64>() / above_absolute.len() as f64;
    let relative_gate = block_loudness(mean1) - RELATIVE_GATE_LU;
    let surviving: Vec<f64> = above_absolute
        .iter()
        .copied()
        .filter(|&p| block_loudness(p) > relative_gate)
        .collect();
    // The loudest block always exceeds mean-10 LU, so this set is non-empty.
    let mean2 = surviving.iter().sum::<f64>() / surviving.len() as f64;
    Ok(LoudnessLufs(block_loudness(mean2)))
}

/// Scale a waveform with a single gain factor so its integrated loudness
/// hits `target` (one-shot, no iteration). Returns the scaled waveform and
/// the applied linear gain.
pub fn rescale_to_lufs(w: &Waveform, target: f64) -> Result<(Waveform, f64), DspError> {
    let current = measure_lufs(w)?;
    let gain = 10f64.powf((target - current.0) / 20.0);
    Ok((w.scaled(gain), gain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;
    use std::f64::consts::PI;

    fn sine(freq: f64, secs: f64, amp: f64) -> Waveform {
        let n = (secs * SAMPLE_RATE as f64) as usize;
        Waveform::new((0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin()).collect())
    }

    #[test]
    fn silence_has_no_gated_blocks() {
        let w = Waveform::new(vec![0.0; SAMPLE_RATE as usize]);
        assert!(matches!(measure_lufs(&w), Err(DspError::NoGatedBlocks)));
    }

    #[test]
    fn too_short_input_rejected() {
        let w = sine(440.0, 0.2, 0.5);
        assert!(matches!(measure_lufs(&w), Err(DspError::TooShort { .. })));
    }

    #[test]
    fn halving_amplitude_drops_6db() {
        let w = sine(440.0, 2.0, 0.8);
        let full = measure_lufs(&w).unwrap().0;
        let half = measure_lufs(&w.scaled(0.5)).unwrap().0;
        assert!((full - half - 6.02).abs() < 0.01, "drop {}", full - half);
    }

    #[test]
    fn full_scale_997hz_sine_reference_level() {
        // Independent oracle: a steady sine has mean square amp^2/2 scaled by
        // the squared K-weighting magnitude, and gating cannot remove blocks
        // of a constant-power signal. Compare the streamed measurement
        // against that closed form, and both against the reference level.
        let w = sine(997.0, 2.0, 1.0);
        let measured = measure_lufs(&w).unwrap().0;
        let oracle = -0.691 + 10.0 * (0.5f64).log10() + k_weighting_gain_db(997.0, SAMPLE_RATE as f64);
        assert!((measured - oracle).abs() < 0.02, "measured {} oracle {}", measured, oracle);
        assert!((measured - -3.01).abs() < 0.10, "measured {}", measured);
    }

    #[test]
    fn scale_covariance() {
        let w = sine(315.0, 1.5, 0.9);
        let base = measure_lufs(&w).unwrap().0;
        for &g in &[0.1, 0.25, 0.5, 0.78, 1.0] {
            let shifted = measure_lufs(&w.scaled(g)).unwrap().0;
            let expect = base + 20.0 * g.log10();
            assert!((shifted - expect).abs() < 0.05, "g={} got {} want {}", g, shifted, expect);
        }
    }

    #[test]
    fn rescale_reaches_target() {
        let w = sine(440.0, 2.0, 0.9);
        let (scaled, gain) = rescale_to_lufs(&w, -25.0).unwrap();
        let after = measure_lufs(&scaled).unwrap().0;
        assert!((after - -25.0).abs() < 0.2, "after {}", after);
        assert!(gain > 0.0);
    }

    #[test]
    fn rescale_to_own_loudness_is_unity_gain() {
        let w = sine(250.0, 1.0, 0.7);
        let current = measure_lufs(&w).unwrap().0;
        let (_, gain) = rescale_to_lufs(&w, current).unwrap();
        assert!((gain - 1.0).abs() < 1e-3, "gain {}", gain);
    }

    #[test]
    fn rescale_gain_matches_db_arithmetic() {
        let w = sine(440.0, 2.0, 1.0);
        let current = measure_lufs(&w).unwrap().0; // about -3.01
        let (_, gain) = rescale_to_lufs(&w, -25.0).unwrap();
        let expect = 10f64.powf((-25.0 - current) / 20.0);
        assert!((gain - expect).abs() < 1e-9);
        // +8 dB step between the corpus loudness extremes
        let (low, _) = rescale_to_lufs(&w, -33.0).unwrap();
        let (relifted, g2) = rescale_to_lufs(&low, -25.0).unwrap();
        assert!((20.0 * g2.log10() - 8.0).abs() < 0.2, "gain dB {}", 20.0 * g2.log10());
        let after = measure_lufs(&relifted).unwrap().0;
        assert!((after - -25.0).abs() < 0.2);
    }
}
