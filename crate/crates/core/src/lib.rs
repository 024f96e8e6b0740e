//! Triplet-loss metric embeddings for keyword spotting.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! * [`phonetics`] — Soundex / Caverphone / Metaphone / NYSIIS encoders, the
//!   weighted phonetic word distance and the vocabulary similarity matrix.
//! * [`features`] — WAV loading, log-mel spectrograms and training
//!   augmentations (time shift, SpecAugment, background noise).
//! * [`encoder`] — the residual convolutional embedder with reverse-mode
//!   gradients, a crossentropy head for the baseline, Novograd and the cosine
//!   learning-rate schedule.
//! * [`triplet`] — squared Euclidean distances, the triplet hinge loss and
//!   randomized online hard-negative mining.
//! * [`sampler`] — uniform / proportional / phonetic class sampling and
//!   PK-batch assembly.
//! * [`knn`] — exact kNN classification and the product-quantized index.
//! * [`pipeline`] — manifests, splits, the training loop, evaluation metrics
//!   and the synthetic dataset generator.

pub mod encoder;
pub mod features;
pub mod knn;
pub mod phonetics;
pub mod pipeline;
pub mod sampler;
pub mod tensor;
pub mod triplet;

pub use tensor::Tensor;
