//! The two training loops: triplet-loss metric learning with PK batches and
//! the crossentropy baseline on plain shuffled batches.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{
    backward, cosine_lr, cross_entropy_head, encode, init_params, novograd_step, Checkpoint,
    EncoderBatch, EncoderParams, Mode, NovogradState,
};
use crate::features::{
    load_wav, mel_spectrogram, mix_background_noise, spec_augment, time_shift, MelConfig, Waveform,
};
use crate::knn::{build_index, knn_classify, IndexFile, IndexKind};
use crate::phonetics::{build_similarity_matrix, DistanceWeights, SimilarityMatrix};
use crate::sampler::{compose_batch, sample_mixture, ClassCatalog};
use crate::tensor::Tensor;
use crate::triplet::batch_triplet_loss;

use super::{EarlyStopping, ManifestEntry, PipelineError, TrainConfig};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub triplets: usize,
    pub val_accuracy: Option<f64>,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} lr={:.6e} loss={:.6} triplets={}",
            self.step, self.lr, self.loss, self.triplets
        )?;
        if let Some(acc) = self.val_accuracy {
            write!(f, " val_acc={acc:.2}")?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub index: IndexFile,
    pub log: Vec<LogRecord>,
}

/// Distinct labels in sorted order; class ids index into this.
pub fn vocab_of(entries: &[ManifestEntry]) -> Vec<String> {
    let mut vocab: Vec<String> = entries.iter().map(|e| e.text.clone()).collect();
    vocab.sort();
    vocab.dedup();
    vocab
}

fn class_catalog(
    entries: &[ManifestEntry],
    vocab: &[String],
) -> Result<ClassCatalog, PipelineError> {
    let mut index: Vec<Vec<usize>> = vec![Vec::new(); vocab.len()];
    for (i, e) in entries.iter().enumerate() {
        let c = vocab
            .binary_search(&e.text)
            .map_err(|_| PipelineError::LabelMismatch(e.text.clone()))?;
        index[c].push(i);
    }
    Ok(ClassCatalog::new(vocab.to_vec(), index)?)
}

fn load_noise_clips(noise_dir: Option<&Path>) -> Result<Vec<Waveform>, PipelineError> {
    let Some(dir) = noise_dir else {
        return Ok(Vec::new());
    };
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Ok(load_wav(p)?)).collect()
}

struct FeaturePipeline {
    waveforms: Vec<Waveform>,
    noise: Vec<Waveform>,
    mel: MelConfig,
}

impl FeaturePipeline {
    fn load(
        entries: &[ManifestEntry],
        base_dir: &Path,
        n_mels: usize,
        noise_dir: Option<&Path>,
    ) -> Result<Self, PipelineError> {
        let waveforms = entries
            .iter()
            .map(|e| Ok(load_wav(&base_dir.join(&e.audio_filepath))?))
            .collect::<Result<Vec<_>, PipelineError>>()?;
        Ok(Self {
            waveforms,
            noise: load_noise_clips(noise_dir)?,
            mel: MelConfig::with_mels(n_mels),
        })
    }

    fn features(
        &self,
        id: usize,
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f32>, usize), PipelineError> {
        let mut wave = self.waveforms[id].clone();
        if cfg.use_augmentation {
            let max = cfg.augment.max_shift_ms;
            let shift = rng.gen_range(-max..=max);
            wave = time_shift(&wave, shift, max)?;
            if !self.noise.is_empty() && rng.gen_bool(cfg.augment.noise_prob) {
                let clip = &self.noise[rng.gen_range(0..self.noise.len())];
                let scale = rng.gen_range(0.0..cfg.augment.noise_scale_max) as f32;
                wave = mix_background_noise(&wave, clip, scale, rng)?;
            }
        }
        let mut spec = mel_spectrogram(&wave, &self.mel)?;
        if cfg.use_augmentation {
            spec = spec_augment(&spec, &cfg.augment, rng);
        }
        Ok((spec.values, spec.frame_count))
    }
}

fn batch_from_ids(
    ids: &[usize],
    pipeline: &FeaturePipeline,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EncoderBatch<f32>, PipelineError> {
    let mut specs = Vec::with_capacity(ids.len());
    for &id in ids {
        specs.push(pipeline.features(id, cfg, rng)?);
    }
    Ok(EncoderBatch::from_spectrograms(&specs, cfg.encoder.n_mels))
}

fn optimizer_step(
    params: &mut EncoderParams<f32>,
    grads: &[&Tensor<f32>],
    extra: Option<(&mut Tensor<f32>, &Tensor<f32>)>,
    state: &mut NovogradState<f32>,
    cfg: &TrainConfig,
    lr: f64,
) {
    let mut trainable = params.trainable_mut();
    let mut tensors: Vec<&mut Tensor<f32>> = trainable.iter_mut().map(|(_, t)| &mut **t).collect();
    let mut all_grads: Vec<&Tensor<f32>> = grads.to_vec();
    if let Some((head, head_grad)) = extra {
        tensors.push(head);
        all_grads.push(head_grad);
    }
    novograd_step(&mut tensors, &all_grads, state, &cfg.novograd, lr);
}

/// Validation accuracy (percent) via kNN over the current train embeddings.
fn validation_accuracy_knn(
    params: &EncoderParams<f32>,
    cfg: &TrainConfig,
    train_entries: &[ManifestEntry],
    val_entries: &[ManifestEntry],
    vocab: &[String],
    base_dir: &Path,
) -> Result<f64, PipelineError> {
    let mut p = params.clone();
    let train_emb = super::embed_entries(&mut p, &cfg.encoder, train_entries, base_dir)?;
    let labels = label_ids(train_entries, vocab)?;
    let index = build_index(train_emb, labels, cfg.encoder.embedding_dim())?;
    let val_emb = super::embed_entries(&mut p, &cfg.encoder, val_entries, base_dir)?;
    let val_labels = label_ids(val_entries, vocab)?;
    let dim = cfg.encoder.embedding_dim();
    let mut correct = 0usize;
    for (i, &label) in val_labels.iter().enumerate() {
        if knn_classify(&index, &val_emb[i * dim..(i + 1) * dim], cfg.knn_k)?.label == label {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / val_labels.len().max(1) as f64)
}

fn label_ids(entries: &[ManifestEntry], vocab: &[String]) -> Result<Vec<u32>, PipelineError> {
    entries
        .iter()
        .map(|e| {
            vocab
                .binary_search(&e.text)
                .map(|c| c as u32)
                .map_err(|_| PipelineError::LabelMismatch(e.text.clone()))
        })
        .collect()
}

fn phonetic_matrix(vocab: &[String]) -> Result<SimilarityMatrix, PipelineError> {
    Ok(build_similarity_matrix(
        vocab,
        &DistanceWeights::default(),
        &[],
    )?)
}

/// Train the metric embedder: PK batches, online triplet mining, Novograd
/// with cosine annealing, early stopping on validation accuracy checked
/// every `eval_every_batches` steps. Returns the checkpoint, an exact kNN
/// index over the final train embeddings and the step log.
pub fn train(
    cfg: &TrainConfig,
    train_entries: &[ManifestEntry],
    val_entries: &[ManifestEntry],
    base_dir: &Path,
    noise_dir: Option<&Path>,
) -> Result<TrainOutcome, PipelineError> {
    if train_entries.is_empty() {
        return Err(PipelineError::EmptyManifest("training set".into()));
    }
    let vocab = vocab_of(train_entries);
    let catalog = class_catalog(train_entries, &vocab)?;
    let matrix = phonetic_matrix(&vocab)?;

    let pipeline = FeaturePipeline::load(train_entries, base_dir, cfg.encoder.n_mels, noise_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params::<f32>(&cfg.encoder, cfg.seed);
    let shapes: Vec<Vec<usize>> = params
        .trainable_mut()
        .iter()
        .map(|(_, t)| t.shape().to_vec())
        .collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut state = NovogradState::new(&shape_refs);

    let batch_size = cfg.batch.batch_size();
    let steps_per_epoch = train_entries.len().div_ceil(batch_size).max(1);
    let total_steps = cfg.epochs * steps_per_epoch;
    let schedule = cfg.schedule(total_steps);
    let mut stopper = EarlyStopping::new(cfg.improvement_threshold, cfg.patience);
    let dim = cfg.encoder.embedding_dim();

    let mut log = Vec::with_capacity(total_steps);
    'training: for step in 0..total_steps {
        let p = cfg.batch.p.min(catalog.len());
        let (_, classes) = sample_mixture(&catalog, &matrix, p, &cfg.sampling, &mut rng)?;
        let picks = compose_batch(&classes, &catalog, cfg.batch.k, &mut rng);
        let ids: Vec<usize> = picks.iter().map(|&(id, _)| id).collect();
        let labels: Vec<usize> = picks.iter().map(|&(_, c)| c).collect();

        let batch = batch_from_ids(&ids, &pipeline, cfg, &mut rng)?;
        let (emb, cache) = encode(&mut params, &cfg.encoder, &batch, Mode::Train)?;
        let (loss, grad, triplets) = batch_triplet_loss(
            emb.data(),
            ids.len(),
            dim,
            &labels,
            cfg.margin,
            &mut rng,
        );
        let lr = cosine_lr(step, &schedule);
        if triplets > 0 {
            let upstream = Tensor::from_vec(&[ids.len(), dim], grad);
            let grads = backward(&params, &cfg.encoder, &cache, &upstream)?;
            optimizer_step(&mut params, &grads.trainable(), None, &mut state, cfg, lr);
        }

        let mut record = LogRecord {
            step,
            lr,
            loss: loss as f64,
            triplets,
            val_accuracy: None,
        };
        if (step + 1) % cfg.eval_every_batches == 0 && !val_entries.is_empty() {
            let acc = validation_accuracy_knn(
                &params,
                cfg,
                train_entries,
                val_entries,
                &vocab,
                base_dir,
            )?;
            record.val_accuracy = Some(acc);
            let stop = stopper.observe(acc);
            log.push(record);
            if stop {
                break 'training;
            }
            continue;
        }
        log.push(record);
    }

    let train_emb = super::embed_entries(&mut params, &cfg.encoder, train_entries, base_dir)?;
    let labels = label_ids(train_entries, &vocab)?;
    let index = IndexFile {
        vocab: vocab.clone(),
        kind: IndexKind::Exact(build_index(train_emb, labels, dim)?),
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint::from_params(&cfg.encoder, &params, None),
        index,
        log,
    })
}

/// Crossentropy baseline: the same encoder plus a linear softmax head,
/// plain shuffled batches, same optimizer and schedule.
pub fn train_crossentropy_baseline(
    cfg: &TrainConfig,
    train_entries: &[ManifestEntry],
    val_entries: &[ManifestEntry],
    base_dir: &Path,
    noise_dir: Option<&Path>,
) -> Result<TrainOutcome, PipelineError> {
    if train_entries.is_empty() {
        return Err(PipelineError::EmptyManifest("training set".into()));
    }
    let vocab = vocab_of(train_entries);
    let n_classes = vocab.len();
    let dim = cfg.encoder.embedding_dim();
    let pipeline = FeaturePipeline::load(train_entries, base_dir, cfg.encoder.n_mels, noise_dir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params::<f32>(&cfg.encoder, cfg.seed);
    let b = (6.0 / (n_classes + dim) as f64).sqrt();
    let mut head = Tensor::from_vec(
        &[n_classes, dim],
        (0..n_classes * dim)
            .map(|_| rng.gen_range(-b..b) as f32)
            .collect(),
    );

    let mut shapes: Vec<Vec<usize>> = params
        .trainable_mut()
        .iter()
        .map(|(_, t)| t.shape().to_vec())
        .collect();
    shapes.push(vec![n_classes, dim]);
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut state = NovogradState::new(&shape_refs);

    let all_labels = label_ids(train_entries, &vocab)?;
    let steps_per_epoch = train_entries.len().div_ceil(cfg.baseline_batch).max(1);
    let total_steps = cfg.epochs * steps_per_epoch;
    let schedule = cfg.schedule(total_steps);
    let mut stopper = EarlyStopping::new(cfg.improvement_threshold, cfg.patience);

    let mut log = Vec::with_capacity(total_steps);
    let mut order: Vec<usize> = (0..train_entries.len()).collect();
    let mut step = 0usize;
    'training: for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.baseline_batch) {
            let batch = batch_from_ids(chunk, &pipeline, cfg, &mut rng)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| all_labels[i] as usize).collect();
            let (emb, cache) = encode(&mut params, &cfg.encoder, &batch, Mode::Train)?;
            let (loss, d_emb, d_head) = cross_entropy_head(&emb, &head, &labels)?;
            let grads = backward(&params, &cfg.encoder, &cache, &d_emb)?;
            let lr = cosine_lr(step, &schedule);
            optimizer_step(
                &mut params,
                &grads.trainable(),
                Some((&mut head, &d_head)),
                &mut state,
                cfg,
                lr,
            );

            let mut record = LogRecord {
                step,
                lr,
                loss: loss as f64,
                triplets: 0,
                val_accuracy: None,
            };
            step += 1;
            if step % cfg.eval_every_batches == 0 && !val_entries.is_empty() {
                let mut p = params.clone();
                let val_emb =
                    super::embed_entries(&mut p, &cfg.encoder, val_entries, base_dir)?;
                let val_labels = label_ids(val_entries, &vocab)?;
                let correct = val_labels
                    .iter()
                    .enumerate()
                    .filter(|&(i, &l)| {
                        let e = &val_emb[i * dim..(i + 1) * dim];
                        let logits: Vec<f32> = (0..n_classes)
                            .map(|c| {
                                head.data()[c * dim..(c + 1) * dim]
                                    .iter()
                                    .zip(e)
                                    .map(|(&w, &x)| w * x)
                                    .sum()
                            })
                            .collect();
                        let best = (0..n_classes)
                            .max_by(|&a, &b| logits[a].partial_cmp(&logits[b]).unwrap())
                            .unwrap();
                        best as u32 == l
                    })
                    .count();
                let acc = 100.0 * correct as f64 / val_labels.len().max(1) as f64;
                record.val_accuracy = Some(acc);
                let stop = stopper.observe(acc);
                log.push(record);
                if stop {
                    break 'training;
                }
                continue;
            }
            log.push(record);
        }
    }

    let train_emb = super::embed_entries(&mut params, &cfg.encoder, train_entries, base_dir)?;
    let index = IndexFile {
        vocab: vocab.clone(),
        kind: IndexKind::Exact(build_index(train_emb, all_labels, dim)?),
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint::from_params(&cfg.encoder, &params, Some(&head)),
        index,
        log,
    })
}
