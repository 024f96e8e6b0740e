//! Audio loading, log-mel spectrogram extraction and training augmentations.

mod augment;
mod mel;
mod wav;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use augment::{mix_background_noise, spec_augment, time_shift};
pub use mel::mel_spectrogram;
pub use wav::{load_wav, write_wav};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unsupported audio ({property}): expected {expected}, got {actual}")]
    UnsupportedAudio {
        property: &'static str,
        expected: String,
        actual: String,
    },
    #[error("malformed WAV file: {0}")]
    MalformedWav(String),
    #[error("audio too short: {samples} samples, need at least {window} (one window)")]
    TooShort { samples: usize, window: usize },
    #[error("time shift {shift_ms} ms outside the allowed range [-{max_ms}, {max_ms}] ms")]
    InvalidShift { shift_ms: i32, max_ms: i32 },
    #[error("noise clip ({noise} samples) shorter than the waveform ({wave} samples)")]
    NoiseTooShort { noise: usize, wave: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono 16 kHz waveform with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Log-mel spectrogram parameters: 25 ms windows with a 10 ms hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_mels: usize,
    pub window_ms: u32,
    pub hop_ms: u32,
    /// FFT size in samples; must be at least the window length.
    pub fft_size: usize,
    /// Added to every filterbank energy before the log; keeps silence finite.
    pub log_floor: f32,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self::with_mels(80)
    }
}

impl MelConfig {
    /// 25 ms / 10 ms frontend with the given number of mel bins and the FFT
    /// size rounded up to the next power of two.
    pub fn with_mels(n_mels: usize) -> Self {
        let window = (SAMPLE_RATE / 1000 * 25) as usize;
        Self {
            n_mels,
            window_ms: 25,
            hop_ms: 10,
            fft_size: window.next_power_of_two(),
            log_floor: 1e-10,
        }
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (sample_rate / 1000 * self.window_ms) as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (sample_rate / 1000 * self.hop_ms) as usize
    }
}

/// Frames x mel-bins grid of log filterbank energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    /// Row-major frames x n_mels.
    pub values: Vec<f32>,
    pub frame_count: usize,
    pub n_mels: usize,
}

impl MelSpectrogram {
    pub fn at(&self, frame: usize, bin: usize) -> f32 {
        self.values[frame * self.n_mels + bin]
    }

    pub fn mean(&self) -> f32 {
        if self.values.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.values.iter().map(|&v| v as f64).sum();
        (sum / self.values.len() as f64) as f32
    }
}

/// Training-time augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Random shift is drawn from [-max_shift_ms, max_shift_ms].
    pub max_shift_ms: i32,
    pub specaug_freq_masks: usize,
    /// Maximum width of one frequency mask, in mel bins.
    pub specaug_freq_width: usize,
    pub specaug_time_masks: usize,
    /// Maximum width of one time mask as a fraction of the frame count.
    pub specaug_time_frac: f64,
    /// Probability of mixing in background noise.
    pub noise_prob: f64,
    /// Maximum noise amplitude scale.
    pub noise_scale_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_shift_ms: 100,
            specaug_freq_masks: 1,
            specaug_freq_width: 10,
            specaug_time_masks: 1,
            specaug_time_frac: 0.1,
            noise_prob: 0.8,
            noise_scale_max: 0.1,
        }
    }
}
