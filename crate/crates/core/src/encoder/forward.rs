//! Forward and reverse passes of the encoder.
//!
//! Batches are zero-padded along time; a per-item valid-frame count masks
//! everything downstream. Invalid frames are re-zeroed after every stage and
//! normalization statistics count only valid cells, so embeddings are exactly
//! independent of how much padding a batch carries.

use crate::tensor::{Scalar, Tensor};

use super::conv::{avg_pool_4x3, avg_pool_4x3_backward, conv2d, conv2d_backward};
use super::{EncoderConfig, EncoderError, EncoderParams};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch normalization statistics, running stats updated.
    Train,
    /// Running statistics, nothing mutated.
    Eval,
}

/// Padded spectrogram batch: values (B, 1, L, n_mels) with per-item valid
/// frame counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBatch<T: Scalar> {
    pub values: Tensor<T>,
    pub valid_frames: Vec<usize>,
}

impl<T: Scalar> EncoderBatch<T> {
    /// Stack variable-length spectrograms (each frames × n_mels, row-major)
    /// into one padded batch.
    pub fn from_spectrograms(specs: &[(Vec<T>, usize)], n_mels: usize) -> Self {
        let max_frames = specs.iter().map(|&(_, f)| f).max().unwrap_or(0);
        let b = specs.len();
        let mut values = Tensor::zeros(&[b, 1, max_frames, n_mels]);
        for (i, (data, frames)) in specs.iter().enumerate() {
            assert_eq!(data.len(), frames * n_mels);
            values.data_mut()[i * max_frames * n_mels..i * max_frames * n_mels + data.len()]
                .copy_from_slice(data);
        }
        Self {
            values,
            valid_frames: specs.iter().map(|&(_, f)| f).collect(),
        }
    }
}

/// Zero all cells at frames >= valid[b]. `t` is (B, C, L, F).
fn mask_frames<T: Scalar>(t: &mut Tensor<T>, valid: &[usize]) {
    let &[b, c, l, f] = t.shape() else {
        panic!("mask_frames needs a 4-D tensor");
    };
    let data = t.data_mut();
    for bi in 0..b {
        let v = valid[bi];
        if v >= l {
            continue;
        }
        for ci in 0..c {
            let base = (bi * c + ci) * l * f;
            data[base + v * f..base + l * f].iter_mut().for_each(|x| *x = T::ZERO);
        }
    }
}

struct BnCache<T: Scalar> {
    xhat: Tensor<T>,
    invstd: Vec<T>,
    count: usize,
}

struct BlockCache<T: Scalar> {
    input: Tensor<T>,
    relu1: Tensor<T>,
    relu2: Tensor<T>,
    bn: BnCache<T>,
}

/// Everything backward needs from the paired forward pass.
pub struct Cache<T: Scalar> {
    mode: Mode,
    input: Tensor<T>,
    valid_in: Vec<usize>,
    valid: Vec<usize>,
    conv_out_shape: Vec<usize>,
    blocks: Vec<BlockCache<T>>,
}

/// Gradients shaped like the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads<T: Scalar> {
    pub conv1: Tensor<T>,
    pub conv2: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads<T: Scalar> {
    pub first_conv: Tensor<T>,
    pub blocks: Vec<BlockGrads<T>>,
}

impl<T: Scalar> EncoderGrads<T> {
    /// Same order as `EncoderParams::trainable_mut`.
    pub fn trainable(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.first_conv];
        for b in &self.blocks {
            out.extend([&b.conv1, &b.conv2, &b.gamma, &b.beta]);
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.trainable().iter().all(|t| t.all_finite())
    }

    pub fn scale(&mut self, s: T) {
        self.first_conv.data_mut().iter_mut().for_each(|v| *v = *v * s);
        for b in &mut self.blocks {
            for t in [&mut b.conv1, &mut b.conv2, &mut b.gamma, &mut b.beta] {
                t.data_mut().iter_mut().for_each(|v| *v = *v * s);
            }
        }
    }
}

fn relu_masked<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    t.map(|v| v.max(T::ZERO))
}

/// Per-channel normalization over the valid cells of the whole batch.
fn batch_norm<T: Scalar>(
    x: &Tensor<T>,
    valid: &[usize],
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: Option<(&mut Tensor<T>, &mut Tensor<T>)>,
    mode: Mode,
) -> (Tensor<T>, BnCache<T>) {
    let &[b, c, l, f] = x.shape() else {
        panic!("batch_norm needs a 4-D tensor");
    };
    let count: usize = valid.iter().map(|&v| v.min(l) * f).sum();
    let n = T::from_f64(count as f64);

    let (mean, invstd): (Vec<T>, Vec<T>) = match mode {
        Mode::Train => {
            // invalid cells are exact zeros, so plain sums touch only valid data
            let mut mean = vec![T::ZERO; c];
            let mut var = vec![T::ZERO; c];
            for ci in 0..c {
                let mut sum = T::ZERO;
                let mut sumsq = T::ZERO;
                for bi in 0..b {
                    let base = (bi * c + ci) * l * f;
                    for &v in &x.data()[base..base + valid[bi].min(l) * f] {
                        sum += v;
                        sumsq += v * v;
                    }
                }
                let m = sum / n;
                mean[ci] = m;
                var[ci] = (sumsq / n - m * m).max(T::ZERO);
            }
            if let Some((rm, rv)) = running {
                let mom = T::from_f64(BN_MOMENTUM);
                let keep = T::ONE - mom;
                for ci in 0..c {
                    rm.data_mut()[ci] = keep * rm.data()[ci] + mom * mean[ci];
                    rv.data_mut()[ci] = keep * rv.data()[ci] + mom * var[ci];
                }
            }
            let invstd = var
                .iter()
                .map(|&v| T::ONE / (v + T::from_f64(BN_EPS)).sqrt())
                .collect();
            (mean, invstd)
        }
        Mode::Eval => {
            let (rm, rv) = running.expect("eval mode needs running statistics");
            let invstd = rv
                .data()
                .iter()
                .map(|&v| T::ONE / (v + T::from_f64(BN_EPS)).sqrt())
                .collect();
            (rm.data().to_vec(), invstd)
        }
    };

    let mut xhat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    for bi in 0..b {
        let vlen = valid[bi].min(l) * f;
        for ci in 0..c {
            let base = (bi * c + ci) * l * f;
            let (m, s) = (mean[ci], invstd[ci]);
            let (g, be) = (gamma.data()[ci], beta.data()[ci]);
            for i in base..base + vlen {
                let xh = (x.data()[i] - m) * s;
                xhat.data_mut()[i] = xh;
                y.data_mut()[i] = g * xh + be;
            }
        }
    }
    (y, BnCache { xhat, invstd, count })
}

/// Run the encoder over a batch. Returns (B × embedding_dim) embeddings and
/// the cache [`backward`] consumes. In `Train` mode running normalization
/// statistics are updated in place.
pub fn encode<T: Scalar>(
    params: &mut EncoderParams<T>,
    cfg: &EncoderConfig,
    batch: &EncoderBatch<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Cache<T>), EncoderError> {
    cfg.validate()?;
    let &[b, 1, l, f] = batch.values.shape() else {
        return Err(EncoderError::ShapeMismatch(format!(
            "batch must be (B, 1, L, F), got {:?}",
            batch.values.shape()
        )));
    };
    if b == 0 || batch.valid_frames.len() != b {
        return Err(EncoderError::ShapeMismatch(format!(
            "{} valid-frame entries for batch of {b}",
            batch.valid_frames.len()
        )));
    }
    if l < 3 || f < 3 {
        return Err(EncoderError::InputTooSmall { frames: l, bins: f });
    }
    if f != cfg.n_mels {
        return Err(EncoderError::ShapeMismatch(format!(
            "batch has {f} mel bins, config expects {}",
            cfg.n_mels
        )));
    }
    if batch.valid_frames.iter().any(|&v| v == 0 || v > l) {
        return Err(EncoderError::ShapeMismatch("valid frames out of range".into()));
    }

    let mut x0 = batch.values.clone();
    mask_frames(&mut x0, &batch.valid_frames);

    let mut a = conv2d(&x0, &params.first_conv, (1, 1));
    mask_frames(&mut a, &batch.valid_frames);
    let conv_out_shape = a.shape().to_vec();

    let (mut cur, valid): (Tensor<T>, Vec<usize>) = if cfg.use_downsample_pool {
        let pooled = avg_pool_4x3(&a);
        let valid: Vec<usize> = batch.valid_frames.iter().map(|&v| v.div_ceil(4)).collect();
        let mut p = pooled;
        mask_frames(&mut p, &valid);
        (p, valid)
    } else {
        (a, batch.valid_frames.clone())
    };

    if cur.shape()[2] < 3 {
        return Err(EncoderError::InputTooSmall {
            frames: cur.shape()[2],
            bins: cur.shape()[3],
        });
    }

    let mut blocks = Vec::with_capacity(cfg.n_res_blocks);
    for (i, block) in params.blocks.iter_mut().enumerate() {
        let d = cfg.dilation_schedule[i];
        let input = cur;
        let mut b1 = conv2d(&input, &block.conv1, d);
        mask_frames(&mut b1, &valid);
        let relu1 = relu_masked(&b1);
        let mut b2 = conv2d(&relu1, &block.conv2, d);
        mask_frames(&mut b2, &valid);
        b2.add_assign(&input); // residual skip
        let relu2 = relu_masked(&b2);
        let (y, bn) = batch_norm(
            &relu2,
            &valid,
            &block.gamma,
            &block.beta,
            Some((&mut block.running_mean, &mut block.running_var)),
            mode,
        );
        cur = y;
        blocks.push(BlockCache {
            input,
            relu1,
            relu2,
            bn,
        });
    }

    // masked global average pool over (time, freq)
    let &[_, c, lp, fp] = cur.shape() else { unreachable!() };
    let mut emb = Tensor::zeros(&[b, c]);
    for bi in 0..b {
        let denom = T::from_f64((valid[bi].min(lp) * fp) as f64);
        for ci in 0..c {
            let base = (bi * c + ci) * lp * fp;
            let mut acc = T::ZERO;
            for &v in &cur.data()[base..base + lp * fp] {
                acc += v;
            }
            emb.data_mut()[bi * c + ci] = acc / denom;
        }
    }

    let cache = Cache {
        mode,
        input: x0,
        valid_in: batch.valid_frames.clone(),
        valid,
        conv_out_shape,
        blocks,
    };
    Ok((emb, cache))
}

/// Exact reverse-mode gradients of [`encode`] (training mode) w.r.t. every
/// trainable parameter, given the upstream gradient on the embeddings.
pub fn backward<T: Scalar>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    cache: &Cache<T>,
    upstream: &Tensor<T>,
) -> Result<EncoderGrads<T>, EncoderError> {
    assert_eq!(cache.mode, Mode::Train, "backward needs a training-mode cache");
    let last = cache.blocks.last().expect("encoder has at least one block");
    let &[b, c, lp, fp] = last.relu2.shape() else { unreachable!() };
    if upstream.shape() != [b, c] {
        return Err(EncoderError::ShapeMismatch(format!(
            "upstream {:?} vs embeddings ({b}, {c})",
            upstream.shape()
        )));
    }

    // embedding pool backward
    let mut dy = Tensor::zeros(&[b, c, lp, fp]);
    for bi in 0..b {
        let denom = T::from_f64((cache.valid[bi].min(lp) * fp) as f64);
        for ci in 0..c {
            let g = upstream.data()[bi * c + ci] / denom;
            let base = (bi * c + ci) * lp * fp;
            let vlen = cache.valid[bi].min(lp) * fp;
            dy.data_mut()[base..base + vlen].iter_mut().for_each(|x| *x = g);
        }
    }

    let mut block_grads: Vec<BlockGrads<T>> = Vec::with_capacity(cache.blocks.len());
    for (i, bc) in cache.blocks.iter().enumerate().rev() {
        let block = &params.blocks[i];
        let d = cfg.dilation_schedule[i];
        let n = T::from_f64(bc.bn.count as f64);

        // normalization backward (batch statistics are part of the graph)
        let mut dgamma = Tensor::zeros(&[c]);
        let mut dbeta = Tensor::zeros(&[c]);
        for ci in 0..c {
            let mut dg = T::ZERO;
            let mut db = T::ZERO;
            for bi in 0..b {
                let base = (bi * c + ci) * lp * fp;
                let vlen = cache.valid[bi].min(lp) * fp;
                for j in base..base + vlen {
                    dg += dy.data()[j] * bc.bn.xhat.data()[j];
                    db += dy.data()[j];
                }
            }
            dgamma.data_mut()[ci] = dg;
            dbeta.data_mut()[ci] = db;
        }
        let mut dx = Tensor::zeros(&[b, c, lp, fp]);
        for ci in 0..c {
            let g = block.gamma.data()[ci];
            let s = bc.bn.invstd[ci];
            let mg = dgamma.data()[ci] / n;
            let mb = dbeta.data()[ci] / n;
            for bi in 0..b {
                let base = (bi * c + ci) * lp * fp;
                let vlen = cache.valid[bi].min(lp) * fp;
                for j in base..base + vlen {
                    dx.data_mut()[j] =
                        g * s * (dy.data()[j] - mb - bc.bn.xhat.data()[j] * mg);
                }
            }
        }

        // second ReLU
        let ds: Tensor<T> = Tensor::from_vec(
            dx.shape(),
            dx.data()
                .iter()
                .zip(bc.relu2.data())
                .map(|(&g, &v)| if v > T::ZERO { g } else { T::ZERO })
                .collect(),
        );

        // residual: ds flows both into conv2 and straight to the input
        let (mut dr1, dw2) = conv2d_backward(&bc.relu1, &block.conv2, d, &ds);
        mask_frames(&mut dr1, &cache.valid);
        let dpre1: Tensor<T> = Tensor::from_vec(
            dr1.shape(),
            dr1.data()
                .iter()
                .zip(bc.relu1.data())
                .map(|(&g, &v)| if v > T::ZERO { g } else { T::ZERO })
                .collect(),
        );
        let (mut din, dw1) = conv2d_backward(&bc.input, &block.conv1, d, &dpre1);
        mask_frames(&mut din, &cache.valid);
        din.add_assign(&ds);

        block_grads.push(BlockGrads {
            conv1: dw1,
            conv2: dw2,
            gamma: dgamma,
            beta: dbeta,
        });
        dy = din;
    }
    block_grads.reverse();

    // stem: optional pool, then the first convolution
    let mut d_conv = if cfg.use_downsample_pool {
        avg_pool_4x3_backward(&cache.conv_out_shape, &dy)
    } else {
        dy
    };
    mask_frames(&mut d_conv, &cache.valid_in);
    let (_, dw_first) = conv2d_backward(&cache.input, &params.first_conv, (1, 1), &d_conv);

    Ok(EncoderGrads {
        first_conv: dw_first,
        blocks: block_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(
        b: usize,
        l: usize,
        f: usize,
        valid: Vec<usize>,
        rng: &mut ChaCha8Rng,
    ) -> EncoderBatch<f64> {
        let mut values = Tensor::zeros(&[b, 1, l, f]);
        values
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-1.0..1.0));
        EncoderBatch {
            values,
            valid_frames: valid,
        }
    }

    fn tiny_cfg() -> EncoderConfig {
        EncoderConfig {
            n_channels: 4,
            n_res_blocks: 1,
            dilation_schedule: vec![(1, 1)],
            use_downsample_pool: false,
            n_mels: 5,
        }
    }

    #[test]
    fn output_shape_res15() {
        let cfg = EncoderConfig::res15_like();
        let mut params = init_params::<f64>(&cfg, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = random_batch(4, 12, 80, vec![12, 9, 7, 12], &mut rng);
        let (emb, _) = encode(&mut params, &cfg, &batch, Mode::Train).unwrap();
        assert_eq!(emb.shape(), &[4, 45]);
        assert!(emb.all_finite());
    }

    #[test]
    fn zero_input_zero_embedding() {
        let cfg = tiny_cfg();
        let mut params = init_params::<f64>(&cfg, 3);
        let batch = EncoderBatch {
            values: Tensor::zeros(&[2, 1, 6, 5]),
            valid_frames: vec![6, 4],
        };
        let (emb, _) = encode(&mut params, &cfg, &batch, Mode::Train).unwrap();
        assert!(emb.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_item_identical_rows() {
        let cfg = tiny_cfg();
        let mut params = init_params::<f64>(&cfg, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let one = random_batch(1, 8, 5, vec![6], &mut rng);
        let mut both = Tensor::zeros(&[2, 1, 8, 5]);
        both.data_mut()[..40].copy_from_slice(one.values.data());
        both.data_mut()[40..].copy_from_slice(one.values.data());
        let batch = EncoderBatch {
            values: both,
            valid_frames: vec![6, 6],
        };
        let (emb, _) = encode(&mut params, &cfg, &batch, Mode::Train).unwrap();
        assert_eq!(&emb.data()[..4], &emb.data()[4..]);
    }

    #[test]
    fn padding_invariance() {
        let cfg = EncoderConfig {
            use_downsample_pool: true,
            ..tiny_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = random_batch(2, 9, 5, vec![9, 6], &mut rng);

        for mode in [Mode::Train, Mode::Eval] {
            let mut p1 = init_params::<f64>(&cfg, 11);
            let mut p2 = p1.clone();
            let (e1, _) = encode(&mut p1, &cfg, &base, mode).unwrap();

            // same items, 10 extra all-masked frames of garbage
            let mut padded = Tensor::zeros(&[2, 1, 19, 5]);
            for b in 0..2 {
                padded.data_mut()[b * 95..b * 95 + 45]
                    .copy_from_slice(&base.values.data()[b * 45..(b + 1) * 45]);
                padded.data_mut()[b * 95 + 45..(b + 1) * 95]
                    .iter_mut()
                    .for_each(|v| *v = rng.gen_range(-9.0..9.0));
            }
            let batch2 = EncoderBatch {
                values: padded,
                valid_frames: vec![9, 6],
            };
            let (e2, _) = encode(&mut p2, &cfg, &batch2, mode).unwrap();
            for (a, b) in e1.data().iter().zip(e2.data()) {
                assert!((a - b).abs() <= 1e-6, "{mode:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn too_small_input_rejected() {
        let cfg = tiny_cfg();
        let mut params = init_params::<f64>(&cfg, 0);
        let batch = EncoderBatch {
            values: Tensor::zeros(&[1, 1, 2, 5]),
            valid_frames: vec![2],
        };
        assert!(matches!(
            encode(&mut params, &cfg, &batch, Mode::Train),
            Err(EncoderError::InputTooSmall { .. })
        ));
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let cfg = tiny_cfg();
        let mut params = init_params::<f64>(&cfg, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = random_batch(3, 7, 5, vec![7, 5, 6], &mut rng);
        let (_, cache) = encode(&mut params, &cfg, &batch, Mode::Train).unwrap();
        let grads = backward(&params, &cfg, &cache, &Tensor::zeros(&[3, 4])).unwrap();
        assert!(grads.trainable().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn duplicated_batch_doubles_gradient() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let one = random_batch(1, 8, 5, vec![8], &mut rng);
        let mut up1 = Tensor::zeros(&[1, 4]);
        up1.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));

        let mut pa = init_params::<f64>(&cfg, 13);
        let mut pb = pa.clone();
        let (_, cache1) = encode(&mut pa, &cfg, &one, Mode::Train).unwrap();
        let g1 = backward(&pa, &cfg, &cache1, &up1).unwrap();

        let mut both = Tensor::zeros(&[2, 1, 8, 5]);
        both.data_mut()[..40].copy_from_slice(one.values.data());
        both.data_mut()[40..].copy_from_slice(one.values.data());
        let two = EncoderBatch {
            values: both,
            valid_frames: vec![8, 8],
        };
        let mut up2 = Tensor::zeros(&[2, 4]);
        up2.data_mut()[..4].copy_from_slice(up1.data());
        up2.data_mut()[4..].copy_from_slice(up1.data());
        let (_, cache2) = encode(&mut pb, &cfg, &two, Mode::Train).unwrap();
        let g2 = backward(&pb, &cfg, &cache2, &up2).unwrap();

        for (a, b) in g1.trainable().iter().zip(g2.trainable().iter()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((2.0 * x - y).abs() <= 1e-9 * y.abs().max(1.0), "{x} vs {y}");
            }
        }
    }

    /// Full finite-difference check of d loss / d params where the loss is a
    /// fixed linear functional of the embeddings.
    #[test]
    fn gradients_match_finite_differences() {
        for (seed, pool, blocks) in [(1u64, false, 1usize), (2, true, 2), (3, false, 2)] {
            let cfg = EncoderConfig {
                n_channels: 3,
                n_res_blocks: blocks,
                dilation_schedule: vec![(1, 1); blocks],
                use_downsample_pool: pool,
                n_mels: 6,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = if pool { 13 } else { 7 };
            let batch = random_batch(2, l, 6, vec![l, l - 2], &mut rng);
            let mut up = Tensor::zeros(&[2, 3]);
            up.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));

            let params = init_params::<f64>(&cfg, seed + 100);
            let mut p = params.clone();
            let (_, cache) = encode(&mut p, &cfg, &batch, Mode::Train).unwrap();
            let grads = backward(&params, &cfg, &cache, &up).unwrap();

            let loss = |params: &EncoderParams<f64>| -> f64 {
                let mut p = params.clone();
                let (emb, _) = encode(&mut p, &cfg, &batch, Mode::Train).unwrap();
                emb.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
            };

            let h = 1e-5;
            let names: Vec<String> = params
                .clone()
                .trainable_mut()
                .into_iter()
                .map(|(n, _)| n)
                .collect();
            for (ti, g) in grads.trainable().iter().enumerate() {
                for i in 0..g.len() {
                    let mut pp = params.clone();
                    pp.trainable_mut()[ti].1.data_mut()[i] += h;
                    let mut pm = params.clone();
                    pm.trainable_mut()[ti].1.data_mut()[i] -= h;
                    let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
                    let a = g.data()[i];
                    let denom = fd.abs().max(a.abs()).max(1e-4);
                    assert!(
                        (fd - a).abs() / denom <= 1e-6,
                        "seed {seed} {}[{i}]: fd {fd} vs {a}",
                        names[ti]
                    );
                }
            }
        }
    }
}
