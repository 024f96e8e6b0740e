//! Embedding extraction over manifests, test-set evaluation and single-clip
//! classification.

use std::path::Path;

use crate::encoder::{encode, Checkpoint, EncoderConfig, EncoderBatch, EncoderParams, Mode};
use crate::features::{load_wav, mel_spectrogram, MelConfig};
use crate::knn::{knn_classify, pq_classify, IndexFile, IndexKind, QueryResult};
use crate::tensor::Tensor;

use super::{macro_f1, ManifestEntry, PipelineError};

/// How test predictions are made: kNN against a stored index (triplet path)
/// or argmax over the checkpoint's head logits (baseline path).
pub enum Predictor<'a> {
    Knn { index: &'a IndexFile, k: usize },
    Head { vocab: &'a [String] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// confusion[actual][predicted]
    pub confusion: Vec<Vec<usize>>,
    pub vocab: Vec<String>,
}

/// Compute embeddings for a list of entries in fixed-size inference batches.
/// Returns row-major N x D embeddings.
pub fn embed_entries(
    params: &mut EncoderParams<f32>,
    cfg: &EncoderConfig,
    entries: &[ManifestEntry],
    base_dir: &Path,
) -> Result<Vec<f32>, PipelineError> {
    let mel = MelConfig::with_mels(cfg.n_mels);
    let dim = cfg.embedding_dim();
    let mut out = Vec::with_capacity(entries.len() * dim);
    for chunk in entries.chunks(32) {
        let mut specs = Vec::with_capacity(chunk.len());
        for e in chunk {
            let wave = load_wav(&base_dir.join(&e.audio_filepath))?;
            let spec = mel_spectrogram(&wave, &mel)?;
            specs.push((spec.values, spec.frame_count));
        }
        let batch = EncoderBatch::from_spectrograms(&specs, cfg.n_mels);
        let (emb, _) = encode(params, cfg, &batch, Mode::Eval)?;
        out.extend_from_slice(emb.data());
    }
    Ok(out)
}

fn head_argmax(weight: &Tensor<f32>, emb: &[f32]) -> u32 {
    let &[c, d] = weight.shape() else {
        panic!("head weight must be (C, D)");
    };
    assert_eq!(emb.len(), d);
    let mut best = (f32::NEG_INFINITY, 0u32);
    for ci in 0..c {
        let z: f32 = weight.data()[ci * d..(ci + 1) * d]
            .iter()
            .zip(emb)
            .map(|(&w, &e)| w * e)
            .sum();
        if z > best.0 {
            best = (z, ci as u32);
        }
    }
    best.1
}

/// Classify every entry and aggregate accuracy, macro-F1 and the confusion
/// matrix. Test labels must be covered by the predictor's vocabulary.
pub fn evaluate(
    checkpoint: &Checkpoint,
    predictor: &Predictor,
    entries: &[ManifestEntry],
    base_dir: &Path,
) -> Result<EvalReport, PipelineError> {
    if entries.is_empty() {
        return Err(PipelineError::EmptyManifest("evaluation set".into()));
    }
    let (mut params, head) = checkpoint.to_params()?;
    let cfg = &checkpoint.config;

    let vocab: Vec<String> = match predictor {
        Predictor::Knn { index, .. } => index.vocab.clone(),
        Predictor::Head { vocab } => vocab.to_vec(),
    };
    let position = |word: &str| -> Result<usize, PipelineError> {
        vocab
            .iter()
            .position(|v| v == word)
            .ok_or_else(|| PipelineError::LabelMismatch(word.to_string()))
    };

    let embeddings = embed_entries(&mut params, cfg, entries, base_dir)?;
    let dim = cfg.embedding_dim();
    let c = vocab.len();
    let mut confusion = vec![vec![0usize; c]; c];
    for (i, e) in entries.iter().enumerate() {
        let emb = &embeddings[i * dim..(i + 1) * dim];
        let predicted = match predictor {
            Predictor::Knn { index, k } => match &index.kind {
                IndexKind::Exact(idx) => knn_classify(idx, emb, *k)?.label,
                IndexKind::Pq(pq) => pq_classify(pq, emb, *k)?.label,
            },
            Predictor::Head { .. } => {
                let w = head.as_ref().ok_or_else(|| {
                    PipelineError::Encoder(crate::encoder::EncoderError::MalformedCheckpoint(
                        "checkpoint has no classifier head".into(),
                    ))
                })?;
                head_argmax(w, emb)
            }
        } as usize;
        let actual = position(&e.text)?;
        if predicted >= c {
            return Err(PipelineError::LabelMismatch(format!(
                "predicted class id {predicted}"
            )));
        }
        confusion[actual][predicted] += 1;
    }

    let total: usize = confusion.iter().map(|r| r.iter().sum::<usize>()).sum();
    let trace: usize = (0..c).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        accuracy: trace as f64 / total as f64,
        macro_f1: macro_f1(&confusion),
        confusion,
        vocab,
    })
}

/// Classify one WAV clip against a stored index. Returns the predicted word
/// and the raw neighbor result.
pub fn classify_wav(
    checkpoint: &Checkpoint,
    index: &IndexFile,
    wav: &Path,
    k: usize,
) -> Result<(String, QueryResult), PipelineError> {
    let (mut params, _) = checkpoint.to_params()?;
    let cfg = &checkpoint.config;
    let wave = load_wav(wav)?;
    let spec = mel_spectrogram(&wave, &MelConfig::with_mels(cfg.n_mels))?;
    let batch = EncoderBatch::from_spectrograms(&[(spec.values, spec.frame_count)], cfg.n_mels);
    let (emb, _) = encode(&mut params, cfg, &batch, Mode::Eval)?;
    let result = match &index.kind {
        IndexKind::Exact(idx) => knn_classify(idx, emb.data(), k)?,
        IndexKind::Pq(pq) => pq_classify(pq, emb.data(), k)?,
    };
    let word = index
        .vocab
        .get(result.label as usize)
        .cloned()
        .unwrap_or_else(|| format!("class{}", result.label));
    Ok((word, result))
}
