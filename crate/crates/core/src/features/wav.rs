//! RIFF/WAVE reading and writing, PCM16 little-endian mono only.

use std::fs;
use std::path::Path;

use super::{FeatureError, Waveform, SAMPLE_RATE};

fn u16_at(bytes: &[u8], off: usize) -> Result<u16, FeatureError> {
    bytes
        .get(off..off + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| FeatureError::MalformedWav("truncated header".into()))
}

fn u32_at(bytes: &[u8], off: usize) -> Result<u32, FeatureError> {
    bytes
        .get(off..off + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| FeatureError::MalformedWav("truncated header".into()))
}

fn unsupported(property: &'static str, expected: impl ToString, actual: impl ToString) -> FeatureError {
    FeatureError::UnsupportedAudio {
        property,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}

/// Load a PCM16 mono 16 kHz WAV file. Samples are scaled by 1/32768.
pub fn load_wav(path: &Path) -> Result<Waveform, FeatureError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(FeatureError::MalformedWav("missing RIFF/WAVE header".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut off = 12;
    while off + 8 <= bytes.len() {
        let id = &bytes[off..off + 4];
        let size = u32_at(&bytes, off + 4)? as usize;
        let body_start = off + 8;
        let body_end = body_start + size;
        if body_end > bytes.len() {
            return Err(FeatureError::MalformedWav("chunk overruns file".into()));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(FeatureError::MalformedWav("fmt chunk too small".into()));
                }
                fmt = Some((
                    u16_at(&bytes, body_start)?,
                    u16_at(&bytes, body_start + 2)?,
                    u32_at(&bytes, body_start + 4)?,
                    u16_at(&bytes, body_start + 14)?,
                ));
            }
            b"data" => data = Some(&bytes[body_start..body_end]),
            _ => {}
        }
        // chunks are word aligned
        off = body_end + size % 2;
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| FeatureError::MalformedWav("missing fmt chunk".into()))?;
    if format != 1 {
        return Err(unsupported("format", "PCM (1)", format));
    }
    if channels != 1 {
        return Err(unsupported("channels", 1, channels));
    }
    if rate != SAMPLE_RATE {
        return Err(unsupported("sample_rate", SAMPLE_RATE, rate));
    }
    if bits != 16 {
        return Err(unsupported("bits_per_sample", 16, bits));
    }

    let data = data.ok_or_else(|| FeatureError::MalformedWav("missing data chunk".into()))?;
    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
        .collect();
    Ok(Waveform::new(samples, SAMPLE_RATE))
}

/// Write a waveform as PCM16 mono. Samples are clamped to [-1, 1).
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<(), FeatureError> {
    let n = wave.samples.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&wave.sample_rate.to_le_bytes());
    out.extend_from_slice(&(wave.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 32767.0 / 32768.0) * 32768.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("kws-wav-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn silence_roundtrip() {
        let path = tmp("silence.wav");
        let wave = Waveform::new(vec![0.0; 16000], SAMPLE_RATE);
        write_wav(&path, &wave).unwrap();
        let loaded = load_wav(&path).unwrap();
        assert_eq!(loaded.samples.len(), 16000);
        assert!(loaded.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn max_amplitude_scaling() {
        let path = tmp("max.wav");
        let wave = Waveform::new(vec![32767.0 / 32768.0], SAMPLE_RATE);
        write_wav(&path, &wave).unwrap();
        let loaded = load_wav(&path).unwrap();
        assert_eq!(loaded.samples[0], 32767.0 / 32768.0);
    }

    #[test]
    fn stereo_rejected() {
        let path = tmp("stereo.wav");
        let wave = Waveform::new(vec![0.0; 4], SAMPLE_RATE);
        write_wav(&path, &wave).unwrap();
        // flip the channel count in the header
        let mut bytes = fs::read(&path).unwrap();
        bytes[22] = 2;
        fs::write(&path, bytes).unwrap();
        match load_wav(&path) {
            Err(FeatureError::UnsupportedAudio { property, .. }) => {
                assert_eq!(property, "channels")
            }
            other => panic!("expected UnsupportedAudio(channels), got {other:?}"),
        }
    }

    #[test]
    fn wrong_rate_rejected() {
        let path = tmp("rate.wav");
        let wave = Waveform::new(vec![0.0; 4], 8000);
        write_wav(&path, &wave).unwrap();
        match load_wav(&path) {
            Err(FeatureError::UnsupportedAudio { property, .. }) => {
                assert_eq!(property, "sample_rate")
            }
            other => panic!("expected UnsupportedAudio(sample_rate), got {other:?}"),
        }
    }

    #[test]
    fn garbage_rejected() {
        let path = tmp("garbage.wav");
        fs::write(&path, b"not a wav").unwrap();
        assert!(matches!(load_wav(&path), Err(FeatureError::MalformedWav(_))));
    }
}
