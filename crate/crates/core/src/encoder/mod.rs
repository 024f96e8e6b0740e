//! The res-style residual convolutional embedder with hand-written
//! reverse-mode gradients, the crossentropy head used by the baseline,
//! the Novograd optimizer and the cosine learning-rate schedule.
//!
//! All numerics are generic over [`Scalar`]: training runs in `f32`,
//! gradient tests instantiate the identical code in `f64`.

mod checkpoint;
mod conv;
mod forward;
mod head;
mod optim;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Scalar, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use forward::{backward, encode, BlockGrads, Cache, EncoderBatch, EncoderGrads, Mode};
pub use head::cross_entropy_head;
pub use optim::{cosine_lr, novograd_step, LrSchedule, NovogradConfig, NovogradState};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("input {frames}x{bins} smaller than the 3x3 receptive minimum")]
    InputTooSmall { frames: usize, bins: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture description. The embedding dimension always equals
/// `n_channels`: the embedding is the globally averaged channel vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_channels: usize,
    pub n_res_blocks: usize,
    /// Per-block (time, freq) dilation.
    pub dilation_schedule: Vec<(usize, usize)>,
    /// 4x3 average pool after the first convolution (res8 style).
    pub use_downsample_pool: bool,
    pub n_mels: usize,
}

impl EncoderConfig {
    /// 45 channels, 6 blocks, dilation 2^(i/3) (1,1,1,2,2,2), no pool.
    pub fn res15_like() -> Self {
        Self {
            n_channels: 45,
            n_res_blocks: 6,
            dilation_schedule: (0..6).map(|i| (1 << (i / 3), 1 << (i / 3))).collect(),
            use_downsample_pool: false,
            n_mels: 80,
        }
    }

    /// 128 channels, 3 blocks, no dilation, downsample pool.
    pub fn res8_like() -> Self {
        Self {
            n_channels: 128,
            n_res_blocks: 3,
            dilation_schedule: vec![(1, 1); 3],
            use_downsample_pool: true,
            n_mels: 80,
        }
    }

    /// 16 channels, 3 blocks, downsample pool, 32 mel bins: a desk-scale
    /// preset that trains in minutes on one CPU core.
    pub fn res_small() -> Self {
        Self {
            n_channels: 16,
            n_res_blocks: 3,
            dilation_schedule: vec![(1, 1); 3],
            use_downsample_pool: true,
            n_mels: 32,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.n_channels
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.n_channels == 0
            || self.n_mels < 3
            || self.dilation_schedule.len() != self.n_res_blocks
            || self.dilation_schedule.iter().any(|&(t, f)| t == 0 || f == 0)
        {
            return Err(EncoderError::ShapeMismatch(format!("invalid config {self:?}")));
        }
        Ok(())
    }
}

/// One residual block: two 3x3 kernels plus the per-channel normalization
/// parameters and its running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T: Scalar> {
    pub conv1: Tensor<T>,
    pub conv2: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T: Scalar> {
    /// (n_channels, 1, 3, 3)
    pub first_conv: Tensor<T>,
    pub blocks: Vec<BlockParams<T>>,
}

impl<T: Scalar> EncoderParams<T> {
    /// The tensors the optimizer updates, with stable names. Running
    /// statistics are excluded: the forward pass owns them.
    pub fn trainable_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = vec![("first_conv".to_string(), &mut self.first_conv)];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("block{i}.conv1"), &mut b.conv1));
            out.push((format!("block{i}.conv2"), &mut b.conv2));
            out.push((format!("block{i}.gamma"), &mut b.gamma));
            out.push((format!("block{i}.beta"), &mut b.beta));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        let blocks: usize = self
            .blocks
            .iter()
            .map(|b| b.conv1.len() + b.conv2.len() + b.gamma.len() + b.beta.len())
            .sum();
        self.first_conv.len() + blocks
    }

    pub fn all_finite(&self) -> bool {
        self.first_conv.all_finite()
            && self.blocks.iter().all(|b| {
                b.conv1.all_finite()
                    && b.conv2.all_finite()
                    && b.gamma.all_finite()
                    && b.beta.all_finite()
            })
    }
}

fn uniform_kernel<T: Scalar, R: Rng>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    // fan-based uniform: b = sqrt(6 / (fan_in + fan_out)) for (out, in, kh, kw)
    let receptive = shape[2] * shape[3];
    let fan_in = shape[1] * receptive;
    let fan_out = shape[0] * receptive;
    let b = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..shape.iter().product())
        .map(|_| T::from_f64(rng.gen_range(-b..b)))
        .collect();
    Tensor::from_vec(shape, data)
}

/// Fresh parameters: kernels uniform in (-b, b) with b = sqrt(6/(fan_in +
/// fan_out)), normalization scale 1 / shift 0, running stats (0, 1).
pub fn init_params<T: Scalar>(cfg: &EncoderConfig, seed: u64) -> EncoderParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.n_channels;
    let first_conv = uniform_kernel(&[c, 1, 3, 3], &mut rng);
    let blocks = (0..cfg.n_res_blocks)
        .map(|_| {
            let mut gamma = Tensor::zeros(&[c]);
            gamma.fill(T::ONE);
            let mut running_var = Tensor::zeros(&[c]);
            running_var.fill(T::ONE);
            BlockParams {
                conv1: uniform_kernel(&[c, c, 3, 3], &mut rng),
                conv2: uniform_kernel(&[c, c, 3, 3], &mut rng),
                gamma,
                beta: Tensor::zeros(&[c]),
                running_mean: Tensor::zeros(&[c]),
                running_var,
            }
        })
        .collect();
    EncoderParams { first_conv, blocks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let cfg = EncoderConfig::res_small();
        let a: EncoderParams<f32> = init_params(&cfg, 42);
        let b: EncoderParams<f32> = init_params(&cfg, 42);
        assert_eq!(a, b);
        let c: EncoderParams<f32> = init_params(&cfg, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn res15_first_conv_shape() {
        let cfg = EncoderConfig::res15_like();
        let p: EncoderParams<f32> = init_params(&cfg, 0);
        assert_eq!(p.first_conv.shape(), &[45, 1, 3, 3]);
        assert_eq!(cfg.embedding_dim(), 45);
        assert_eq!(
            cfg.dilation_schedule,
            vec![(1, 1), (1, 1), (1, 1), (2, 2), (2, 2), (2, 2)]
        );
    }

    #[test]
    fn kernel_values_within_bound() {
        let cfg = EncoderConfig::res_small();
        let p: EncoderParams<f64> = init_params(&cfg, 7);
        let b_first = (6.0 / (9 + 16 * 9) as f64).sqrt();
        assert!(p.first_conv.data().iter().all(|&v| v.abs() < b_first));
        let b_block = (6.0 / (2 * 16 * 9) as f64).sqrt();
        for block in &p.blocks {
            assert!(block.conv1.data().iter().all(|&v| v.abs() < b_block));
            assert!(block.conv2.data().iter().all(|&v| v.abs() < b_block));
            assert!(block.gamma.data().iter().all(|&v| v == 1.0));
            assert!(block.beta.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn parameter_counts_preserve_size_ordering() {
        let res15: EncoderParams<f32> = init_params(&EncoderConfig::res15_like(), 0);
        let res8: EncoderParams<f32> = init_params(&EncoderConfig::res8_like(), 0);
        // 45*9 + 6*(2*45*45*9 + 2*45) and 128*9 + 3*(2*128*128*9 + 2*128)
        assert_eq!(res15.parameter_count(), 405 + 6 * (2 * 45 * 45 * 9 + 90));
        assert_eq!(res8.parameter_count(), 1152 + 3 * (2 * 128 * 128 * 9 + 256));
        assert!(res8.parameter_count() > res15.parameter_count());
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::res15_like().validate().is_ok());
        let mut bad = EncoderConfig::res_small();
        bad.dilation_schedule.pop();
        assert!(bad.validate().is_err());
    }
}
