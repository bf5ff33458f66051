//! RIFF/WAVE PCM16 mono reader and writer.
//!
//! Only the one format the pipeline produces and consumes: 16-bit PCM,
//! single channel, 8000 Hz. Everything else is rejected with the offending
//! field named, so bad inputs fail loudly at the door.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::{DspError, Waveform, SAMPLE_RATE};

fn io_err(path: &Path, source: std::io::Error) -> DspError {
    DspError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, detail: impl Into<String>) -> DspError {
    DspError::Parse { path: path.display().to_string(), detail: detail.into() }
}

fn format_err(path: &Path, field: &'static str, got: impl ToString, expected: impl ToString) -> DspError {
    DspError::Format {
        path: path.display().to_string(),
        field,
        got: got.to_string(),
        expected: expected.to_string(),
    }
}

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Read a PCM16 mono 8 kHz WAV file. Samples are scaled to [-1, 1) by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, DspError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(parse_err(path, "missing RIFF/WAVE header"));
    }

    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (audio_format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(&bytes, pos + 4) as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(parse_err(path, format!("chunk {:?} overruns file", String::from_utf8_lossy(id))));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(parse_err(path, "fmt chunk too small"));
                }
                fmt = Some((
                    u16_at(&bytes, body_start),
                    u16_at(&bytes, body_start + 2),
                    u32_at(&bytes, body_start + 4),
                    u16_at(&bytes, body_start + 14),
                ));
            }
            b"data" => data = Some(&bytes[body_start..body_start + size]),
            _ => {} // skip unknown chunks (LIST, fact, ...)
        }
        // chunks are word-aligned
        pos = body_start + size + (size & 1);
    }

    let (audio_format, channels, rate, bits) = fmt.ok_or_else(|| parse_err(path, "no fmt chunk"))?;
    if audio_format != 1 {
        return Err(format_err(path, "audio_format", audio_format, "1 (PCM)"));
    }
    if channels != 1 {
        return Err(format_err(path, "channels", channels, 1));
    }
    if rate != SAMPLE_RATE {
        return Err(format_err(path, "sample_rate", rate, SAMPLE_RATE));
    }
    if bits != 16 {
        return Err(format_err(path, "bits_per_sample", bits, 16));
    }
    let data = data.ok_or_else(|| parse_err(path, "no data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(parse_err(path, "odd data chunk length"));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Ok(Waveform::new(samples))
}

/// Write a PCM16 mono 8 kHz WAV file. Samples are clamped to [-1, 1) and
/// rounded to the nearest 16-bit level.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<(), DspError> {
    let path = path.as_ref();
    if w.sample_rate != SAMPLE_RATE {
        return Err(format_err(path, "sample_rate", w.sample_rate, SAMPLE_RATE));
    }
    let data_len = (w.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &w.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&out).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, secs: f64, amp: f64) -> Waveform {
        let n = (secs * SAMPLE_RATE as f64) as usize;
        Waveform::new((0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin()).collect())
    }

    #[test]
    fn roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sine.wav");
        let w = sine(440.0, 1.0, 0.9);
        write_wav(&p, &w).unwrap();
        let r = read_wav(&p).unwrap();
        assert_eq!(r.len(), w.len());
        let max_diff = w
            .samples
            .iter()
            .zip(&r.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff <= 1.0 / 32768.0, "max diff {}", max_diff);
    }

    #[test]
    fn rejects_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stereo.wav");
        // Hand-build a 2-channel header with an empty data chunk.
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&36u32.to_le_bytes());
        b.extend_from_slice(b"WAVE");
        b.extend_from_slice(b"fmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&2u16.to_le_bytes()); // stereo
        b.extend_from_slice(&8000u32.to_le_bytes());
        b.extend_from_slice(&32000u32.to_le_bytes());
        b.extend_from_slice(&4u16.to_le_bytes());
        b.extend_from_slice(&16u16.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&0u32.to_le_bytes());
        std::fs::write(&p, b).unwrap();
        match read_wav(&p) {
            Err(DspError::Format { field, .. }) => assert_eq!(field, "channels"),
            other => panic!("expected channel format error, got {:?}", other),
        }
    }

    #[test]
    fn rejects_wrong_rate_naming_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("16k.wav");
        let w = sine(440.0, 0.1, 0.5);
        write_wav(&p, &w).unwrap();
        // Patch the header's sample rate to 16 kHz.
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[24..28].copy_from_slice(&16000u32.to_le_bytes());
        bytes[28..32].copy_from_slice(&32000u32.to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        match read_wav(&p) {
            Err(DspError::Format { field, got, .. }) => {
                assert_eq!(field, "sample_rate");
                assert_eq!(got, "16000");
            }
            other => panic!("expected sample_rate format error, got {:?}", other),
        }
    }

    #[test]
    fn skips_extra_chunks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("listed.wav");
        let w = sine(200.0, 0.05, 0.4);
        write_wav(&p, &w).unwrap();
        // Splice a LIST chunk between fmt and data.
        let bytes = std::fs::read(&p).unwrap();
        let mut patched = bytes[..36].to_vec();
        patched.extend_from_slice(b"LIST");
        patched.extend_from_slice(&4u32.to_le_bytes());
        patched.extend_from_slice(b"INFO");
        patched.extend_from_slice(&bytes[36..]);
        let total = (patched.len() - 8) as u32;
        patched[4..8].copy_from_slice(&total.to_le_bytes());
        std::fs::write(&p, &patched).unwrap();
        let r = read_wav(&p).unwrap();
        assert_eq!(r.len(), w.len());
    }
}
