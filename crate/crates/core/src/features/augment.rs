//! The three training augmentations: time shift, SpecAugment masking and
//! background-noise mixing. All randomness comes from the caller's generator.

use rand::Rng;

use super::{AugmentConfig, FeatureError, MelSpectrogram, Waveform};

/// Translate the waveform by `shift_ms` (positive = later), zero-filling the
/// vacated region. Length is unchanged.
pub fn time_shift(wave: &Waveform, shift_ms: i32, max_ms: i32) -> Result<Waveform, FeatureError> {
    if shift_ms.abs() > max_ms {
        return Err(FeatureError::InvalidShift { shift_ms, max_ms });
    }
    let n = wave.samples.len();
    let shift = (shift_ms as i64 * wave.sample_rate as i64 / 1000) as i64;
    let mut samples = vec![0.0f32; n];
    for (i, out) in samples.iter_mut().enumerate() {
        let src = i as i64 - shift;
        if src >= 0 && (src as usize) < n {
            *out = wave.samples[src as usize];
        }
    }
    Ok(Waveform::new(samples, wave.sample_rate))
}

/// SpecAugment: mask random frequency bands and time bands with the
/// spectrogram's mean value (computed before masking).
pub fn spec_augment<R: Rng>(
    spec: &MelSpectrogram,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> MelSpectrogram {
    let mut out = spec.clone();
    let fill = spec.mean();
    let (frames, n_mels) = (spec.frame_count, spec.n_mels);

    for _ in 0..cfg.specaug_freq_masks {
        let width = rng.gen_range(0..=cfg.specaug_freq_width.min(n_mels));
        if width == 0 {
            continue;
        }
        let start = rng.gen_range(0..=n_mels - width);
        for frame in 0..frames {
            for bin in start..start + width {
                out.values[frame * n_mels + bin] = fill;
            }
        }
    }

    let max_time_width = (cfg.specaug_time_frac * frames as f64).floor() as usize;
    for _ in 0..cfg.specaug_time_masks {
        let width = rng.gen_range(0..=max_time_width.min(frames));
        if width == 0 {
            continue;
        }
        let start = rng.gen_range(0..=frames - width);
        for frame in start..start + width {
            for bin in 0..n_mels {
                out.values[frame * n_mels + bin] = fill;
            }
        }
    }

    out
}

/// Mix a random window of the noise clip into the waveform at the given
/// amplitude scale, clamping to [-1, 1].
pub fn mix_background_noise<R: Rng>(
    wave: &Waveform,
    noise: &Waveform,
    scale: f32,
    rng: &mut R,
) -> Result<Waveform, FeatureError> {
    let n = wave.samples.len();
    if noise.samples.len() < n {
        return Err(FeatureError::NoiseTooShort {
            noise: noise.samples.len(),
            wave: n,
        });
    }
    let offset = rng.gen_range(0..=noise.samples.len() - n);
    let samples = wave
        .samples
        .iter()
        .zip(&noise.samples[offset..offset + n])
        .map(|(&s, &z)| (s + scale * z).clamp(-1.0, 1.0))
        .collect();
    Ok(Waveform::new(samples, wave.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{mel_spectrogram, MelConfig, SAMPLE_RATE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(n: usize) -> Waveform {
        Waveform::new((0..n).map(|i| (i % 97) as f32 / 100.0).collect(), SAMPLE_RATE)
    }

    #[test]
    fn shift_right_zero_fills() {
        let wave = ramp(16000);
        let shifted = time_shift(&wave, 100, 100).unwrap();
        assert_eq!(shifted.samples.len(), 16000);
        assert!(shifted.samples[..1600].iter().all(|&s| s == 0.0));
        assert_eq!(shifted.samples[1600], wave.samples[0]);
    }

    #[test]
    fn zero_shift_is_identity() {
        let wave = ramp(1000);
        assert_eq!(time_shift(&wave, 0, 100).unwrap(), wave);
    }

    #[test]
    fn out_of_range_shift_rejected() {
        let wave = ramp(1000);
        assert!(matches!(
            time_shift(&wave, 101, 100),
            Err(FeatureError::InvalidShift { .. })
        ));
    }

    #[test]
    fn shift_composition_zeroes_both_ends() {
        let wave = ramp(16000);
        let there = time_shift(&wave, -50, 100).unwrap();
        let back = time_shift(&there, 50, 100).unwrap();
        // the 800 leading samples are lost for good, the rest comes back
        assert!(back.samples[..800].iter().all(|&s| s == 0.0));
        assert_eq!(&back.samples[800..], &wave.samples[800..]);
    }

    fn spec() -> crate::features::MelSpectrogram {
        mel_spectrogram(&ramp(16000), &MelConfig::with_mels(32)).unwrap()
    }

    #[test]
    fn zero_masks_is_identity() {
        let cfg = AugmentConfig {
            specaug_freq_masks: 0,
            specaug_time_masks: 0,
            ..AugmentConfig::default()
        };
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(spec_augment(&s, &cfg, &mut rng), s);
    }

    #[test]
    fn full_freq_mask_fills_with_mean() {
        let s = spec();
        let cfg = AugmentConfig {
            specaug_freq_masks: 1,
            specaug_freq_width: usize::MAX,
            specaug_time_masks: 0,
            ..AugmentConfig::default()
        };
        // try seeds until the sampled width is the full band
        let mean = s.mean();
        let mut hit = false;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let masked = spec_augment(&s, &cfg, &mut rng);
            if masked.values.iter().all(|&v| v == mean) {
                hit = true;
                break;
            }
        }
        assert!(hit, "full-width mask never drawn in 200 seeds");
    }

    #[test]
    fn masked_cell_count_bounded() {
        let s = spec();
        let cfg = AugmentConfig {
            specaug_freq_masks: 2,
            specaug_freq_width: 5,
            specaug_time_masks: 2,
            specaug_time_frac: 0.1,
            ..AugmentConfig::default()
        };
        let bound = (cfg.specaug_freq_masks * cfg.specaug_freq_width * s.frame_count) as f64
            + cfg.specaug_time_masks as f64 * cfg.specaug_time_frac * s.frame_count as f64
                * s.n_mels as f64;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let masked = spec_augment(&s, &cfg, &mut rng);
            let changed = masked
                .values
                .iter()
                .zip(&s.values)
                .filter(|(a, b)| a != b)
                .count();
            assert!(changed as f64 <= bound, "seed {seed}: {changed} > {bound}");
        }
    }

    #[test]
    fn augmentations_preserve_shape() {
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let masked = spec_augment(&s, &AugmentConfig::default(), &mut rng);
        assert_eq!(masked.frame_count, s.frame_count);
        assert_eq!(masked.n_mels, s.n_mels);
    }

    #[test]
    fn noise_zero_scale_is_identity() {
        let wave = ramp(1000);
        let noise = ramp(5000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            mix_background_noise(&wave, &noise, 0.0, &mut rng).unwrap(),
            wave
        );
    }

    #[test]
    fn noise_window_on_silence() {
        let wave = Waveform::new(vec![0.0; 100], SAMPLE_RATE);
        let noise = ramp(500);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mixed = mix_background_noise(&wave, &noise, 1.0, &mut rng).unwrap();
        // output must be a contiguous window of the noise clip
        let found = (0..=400).any(|off| mixed.samples == noise.samples[off..off + 100]);
        assert!(found);
    }

    #[test]
    fn noise_bounded_by_scale() {
        let wave = ramp(1000);
        let noise = ramp(3000);
        let scale = 0.25f32;
        let max_noise = noise.samples.iter().fold(0.0f32, |a, &b| a.max(b.abs()));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mixed = mix_background_noise(&wave, &noise, scale, &mut rng).unwrap();
        for (m, s) in mixed.samples.iter().zip(&wave.samples) {
            assert!((m - s).abs() <= scale * max_noise + 1e-6);
        }
    }

    #[test]
    fn short_noise_rejected() {
        let wave = ramp(1000);
        let noise = ramp(500);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            mix_background_noise(&wave, &noise, 0.1, &mut rng),
            Err(FeatureError::NoiseTooShort { .. })
        ));
    }
}
