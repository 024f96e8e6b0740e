//! Short-time log-mel filterbank features.
//!
//! Hann window, power spectrum via FFT, triangular mel filters on the HTK
//! scale spanning 0-8000 Hz, natural log with an additive floor.

use rustfft::{num_complex::Complex, FftPlanner};

use super::{FeatureError, MelConfig, MelSpectrogram, Waveform};

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank: `n_mels` rows over `fft_size / 2 + 1` spectrum bins.
fn mel_filterbank(n_mels: usize, fft_size: usize, sample_rate: u32) -> Vec<Vec<f32>> {
    let n_bins = fft_size / 2 + 1;
    let f_max = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(f_max);
    // n_mels + 2 evenly spaced mel points, converted back to Hz
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();

    let bin_hz = sample_rate as f64 / fft_size as f64;
    let mut bank = vec![vec![0.0f32; n_bins]; n_mels];
    for m in 0..n_mels {
        let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
        for (bin, weight) in bank[m].iter_mut().enumerate() {
            let f = bin as f64 * bin_hz;
            if f > lo && f < hi {
                let w = if f <= center {
                    (f - lo) / (center - lo)
                } else {
                    (hi - f) / (hi - center)
                };
                *weight = w as f32;
            }
        }
    }
    bank
}

/// Extract a log-mel spectrogram.
///
/// `frame_count = (len - window) / hop + 1`; errors if the waveform is
/// shorter than one window.
pub fn mel_spectrogram(wave: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram, FeatureError> {
    let window = cfg.window_samples(wave.sample_rate);
    let hop = cfg.hop_samples(wave.sample_rate);
    let n = wave.samples.len();
    if n < window {
        return Err(FeatureError::TooShort {
            samples: n,
            window,
        });
    }
    assert!(cfg.fft_size >= window, "fft_size must cover the window");

    let frame_count = (n - window) / hop + 1;
    let hann: Vec<f32> = (0..window)
        .map(|i| {
            0.5 * (1.0
                - (2.0 * std::f64::consts::PI * i as f64 / (window - 1) as f64).cos())
                as f32
        })
        .collect();
    let bank = mel_filterbank(cfg.n_mels, cfg.fft_size, wave.sample_rate);

    let fft = FftPlanner::<f32>::new().plan_fft_forward(cfg.fft_size);
    let n_bins = cfg.fft_size / 2 + 1;
    let mut values = Vec::with_capacity(frame_count * cfg.n_mels);
    let mut buf = vec![Complex::new(0.0f32, 0.0); cfg.fft_size];
    let mut power = vec![0.0f32; n_bins];

    for frame in 0..frame_count {
        let start = frame * hop;
        for (i, c) in buf.iter_mut().enumerate() {
            let s = if i < window {
                wave.samples[start + i] * hann[i]
            } else {
                0.0
            };
            *c = Complex::new(s, 0.0);
        }
        fft.process(&mut buf);
        for (bin, p) in power.iter_mut().enumerate() {
            *p = buf[bin].norm_sqr();
        }
        for filter in &bank {
            let energy: f32 = filter
                .iter()
                .zip(&power)
                .map(|(&w, &p)| w * p)
                .sum();
            values.push((energy + cfg.log_floor).ln());
        }
    }

    Ok(MelSpectrogram {
        values,
        frame_count,
        n_mels: cfg.n_mels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SAMPLE_RATE;

    fn cfg(n_mels: usize) -> MelConfig {
        MelConfig::with_mels(n_mels)
    }

    fn sine(freq: f64, secs: f64) -> Waveform {
        let n = (secs * SAMPLE_RATE as f64) as usize;
        let samples = (0..n)
            .map(|i| {
                (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
                    as f32
            })
            .collect();
        Waveform::new(samples, SAMPLE_RATE)
    }

    #[test]
    fn frame_count_formula() {
        let wave = Waveform::new(vec![0.0; 16000], SAMPLE_RATE);
        let spec = mel_spectrogram(&wave, &cfg(64)).unwrap();
        assert_eq!(spec.frame_count, 98); // (16000 - 400) / 160 + 1
        assert_eq!(spec.values.len(), 98 * 64);
    }

    #[test]
    fn silence_hits_the_floor() {
        let c = cfg(32);
        let wave = Waveform::new(vec![0.0; 8000], SAMPLE_RATE);
        let spec = mel_spectrogram(&wave, &c).unwrap();
        let floor = c.log_floor.ln();
        assert!(spec.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn too_short_rejected() {
        let wave = Waveform::new(vec![0.0; 399], SAMPLE_RATE);
        assert!(matches!(
            mel_spectrogram(&wave, &cfg(32)),
            Err(FeatureError::TooShort { .. })
        ));
    }

    #[test]
    fn pure_tone_peaks_in_the_right_bin() {
        // oracle: the mel bin whose center band contains 1 kHz
        let c = cfg(64);
        let wave = sine(1000.0, 1.0);
        let spec = mel_spectrogram(&wave, &c).unwrap();

        let mel_max = hz_to_mel(8000.0);
        let expected_bin = (0..c.n_mels)
            .min_by(|&a, &b| {
                let center = |m: usize| mel_to_hz(mel_max * (m + 1) as f64 / (c.n_mels + 1) as f64);
                (center(a) - 1000.0)
                    .abs()
                    .partial_cmp(&(center(b) - 1000.0).abs())
                    .unwrap()
            })
            .unwrap();

        for frame in 0..spec.frame_count {
            let argmax = (0..c.n_mels)
                .max_by(|&a, &b| spec.at(frame, a).partial_cmp(&spec.at(frame, b)).unwrap())
                .unwrap();
            assert!(
                (argmax as i64 - expected_bin as i64).abs() <= 1,
                "frame {frame}: argmax {argmax}, expected near {expected_bin}"
            );
        }
    }

    #[test]
    fn deterministic() {
        let wave = sine(440.0, 0.5);
        let a = mel_spectrogram(&wave, &cfg(40)).unwrap();
        let b = mel_spectrogram(&wave, &cfg(40)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn amplitude_scaling_shifts_log_energy() {
        // scaling samples by c shifts log power by 2 ln c where energy is
        // far above the floor
        let c = cfg(40);
        let wave = sine(1000.0, 0.5);
        let scaled = Waveform::new(wave.samples.iter().map(|&s| s * 1.5).collect(), SAMPLE_RATE);
        let a = mel_spectrogram(&wave, &c).unwrap();
        let b = mel_spectrogram(&scaled, &c).unwrap();
        // the additive floor biases the shift by ~floor/energy, so the
        // 1e-3 tolerance needs energies well above the floor
        let threshold = (1e6 * c.log_floor).ln();
        let shift = 2.0 * 1.5f64.ln();
        let mut checked = 0;
        for (&va, &vb) in a.values.iter().zip(&b.values) {
            if va > threshold {
                assert!(
                    ((vb - va) as f64 - shift).abs() < 1e-3,
                    "shift {} vs {}",
                    vb - va,
                    shift
                );
                checked += 1;
            }
        }
        assert!(checked > 0);
    }
}
