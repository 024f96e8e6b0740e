//! Dataset manifests and splits, the training loops, evaluation metrics,
//! early stopping and a synthetic-dataset generator for desk-scale runs.

mod eval;
mod synth;
mod train;

use std::fs;
use std::path::Path;

use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncoderConfig, EncoderError, LrSchedule, NovogradConfig};
use crate::features::{AugmentConfig, FeatureError};
use crate::knn::KnnError;
use crate::phonetics::PhoneticError;
use crate::sampler::{BatchSpec, SamplerError, StrategyMix, Strategy};
use crate::triplet::Margin;

pub use eval::{classify_wav, embed_entries, evaluate, EvalReport, Predictor};
pub use synth::generate_synthetic_dataset;
pub use train::{train, train_crossentropy_baseline, LogRecord, TrainOutcome};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("label {0:?} not present in the training vocabulary")]
    LabelMismatch(String),
    #[error("empty manifest: {0}")]
    EmptyManifest(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Phonetic(#[from] PhoneticError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One dataset row: `{"audio_filepath": ..., "duration": ..., "text": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio_filepath: String,
    pub duration: f64,
    pub text: String,
}

/// Parse a line-delimited JSON manifest; malformed lines are reported with
/// their 1-based line number.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, PipelineError> {
    let content = fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| PipelineError::Manifest {
                line: i + 1,
                message: e.to_string(),
            })?;
        if entry.text.is_empty() {
            return Err(PipelineError::Manifest {
                line: i + 1,
                message: "empty label".into(),
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn save_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), PipelineError> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<ManifestEntry>,
    pub val: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

/// Per-word 8:1:1 split: shuffle each word's entries, take ceil(0.8 n) for
/// train and ceil(0.1 n) for val, the rest is test. Words with fewer than 3
/// entries go entirely to train.
pub fn split_8_1_1(entries: &[ManifestEntry], seed: u64) -> DatasetSplit {
    let mut by_word: std::collections::BTreeMap<&str, Vec<&ManifestEntry>> = Default::default();
    for e in entries {
        by_word.entry(&e.text).or_default().push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (_, mut group) in by_word {
        group.shuffle(&mut rng);
        let n = group.len();
        if n < 3 {
            split.train.extend(group.into_iter().cloned());
            continue;
        }
        let n_train = (0.8 * n as f64).ceil() as usize;
        let n_val = (0.1 * n as f64).ceil() as usize;
        for (i, e) in group.into_iter().enumerate() {
            if i < n_train {
                split.train.push(e.clone());
            } else if i < n_train + n_val {
                split.val.push(e.clone());
            } else {
                split.test.push(e.clone());
            }
        }
    }
    split
}

/// Everything the training loop needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub encoder: EncoderConfig,
    pub margin: Margin,
    pub sampling: StrategyMix,
    pub batch: BatchSpec,
    pub epochs: usize,
    pub eval_every_batches: usize,
    pub patience: usize,
    /// Validation accuracy must rise by more than this many percentage
    /// points to count as an improvement.
    pub improvement_threshold: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub use_augmentation: bool,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub novograd: NovogradConfig,
    pub knn_k: usize,
    /// Baseline batch size.
    pub baseline_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::res_small(),
            margin: Margin::default(),
            sampling: StrategyMix::new(vec![Strategy::Uniform]),
            batch: BatchSpec::new(10, 4),
            epochs: 10,
            eval_every_batches: 1000,
            patience: 3,
            improvement_threshold: 0.1,
            seed: 0,
            augment: AugmentConfig::default(),
            use_augmentation: true,
            lr_initial: 1e-3,
            lr_final: 1e-4,
            novograd: NovogradConfig::default(),
            knn_k: 5,
            baseline_batch: 128,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self, total_steps: usize) -> LrSchedule {
        LrSchedule {
            lr_initial: self.lr_initial,
            lr_final: self.lr_final,
            total_steps: total_steps.max(1),
        }
    }
}

/// Best-so-far early stopping: stop once the monitored accuracy has failed
/// to beat the best seen value by more than `threshold` for `patience`
/// consecutive checks.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    threshold: f64,
    patience: usize,
    best: f64,
    streak: usize,
}

impl EarlyStopping {
    pub fn new(threshold: f64, patience: usize) -> Self {
        Self {
            threshold,
            patience,
            best: f64::NEG_INFINITY,
            streak: 0,
        }
    }

    /// Record one accuracy check; returns true when training should stop.
    pub fn observe(&mut self, accuracy: f64) -> bool {
        if accuracy - self.best > self.threshold {
            self.best = accuracy;
            self.streak = 0;
        } else {
            self.streak += 1;
        }
        self.streak >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Unweighted mean of per-class F1. Classes that are never predicted and
/// never present are excluded; classes with a zero precision+recall
/// denominator contribute 0.
pub fn macro_f1(confusion: &[Vec<usize>]) -> f64 {
    let c = confusion.len();
    let mut sum = 0.0;
    let mut classes = 0usize;
    for i in 0..c {
        assert_eq!(confusion[i].len(), c, "confusion matrix must be square");
        let tp = confusion[i][i];
        let actual: usize = confusion[i].iter().sum();
        let predicted: usize = (0..c).map(|r| confusion[r][i]).sum();
        if actual == 0 && predicted == 0 {
            continue;
        }
        classes += 1;
        let p = if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 };
        let r = if actual > 0 { tp as f64 / actual as f64 } else { 0.0 };
        if p + r > 0.0 {
            sum += 2.0 * p * r / (p + r);
        }
    }
    if classes == 0 {
        0.0
    } else {
        sum / classes as f64
    }
}
