//! Softmax crossentropy head for the baseline classifier. The head is a
//! single bias-free linear layer on top of the embeddings.

use crate::tensor::{Scalar, Tensor};

use super::EncoderError;

/// Mean over the batch of -log softmax(weight . embedding)[label].
///
/// `embeddings`: (B, D); `weight`: (C, D). Returns the loss plus exact
/// gradients w.r.t. the embeddings and the weight.
pub fn cross_entropy_head<T: Scalar>(
    embeddings: &Tensor<T>,
    weight: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>, Tensor<T>), EncoderError> {
    let &[b, d] = embeddings.shape() else {
        return Err(EncoderError::ShapeMismatch(format!(
            "embeddings must be (B, D), got {:?}",
            embeddings.shape()
        )));
    };
    let &[c, wd] = weight.shape() else {
        return Err(EncoderError::ShapeMismatch(format!(
            "weight must be (C, D), got {:?}",
            weight.shape()
        )));
    };
    if wd != d || labels.len() != b || b == 0 {
        return Err(EncoderError::ShapeMismatch(format!(
            "embeddings ({b}, {d}), weight ({c}, {wd}), {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(EncoderError::InvalidLabel {
            label: bad,
            classes: c,
        });
    }

    let inv_b = T::ONE / T::from_f64(b as f64);
    let mut loss = T::ZERO;
    let mut d_emb = Tensor::zeros(&[b, d]);
    let mut d_weight = Tensor::zeros(&[c, d]);
    let mut probs = vec![T::ZERO; c];

    for bi in 0..b {
        let e = &embeddings.data()[bi * d..(bi + 1) * d];
        // logits, stabilized softmax
        let mut max_logit = T::from_f64(f64::NEG_INFINITY);
        for (ci, p) in probs.iter_mut().enumerate() {
            let w = &weight.data()[ci * d..(ci + 1) * d];
            let mut z = T::ZERO;
            for k in 0..d {
                z += w[k] * e[k];
            }
            *p = z;
            max_logit = max_logit.max(z);
        }
        let mut denom = T::ZERO;
        for p in probs.iter_mut() {
            *p = (*p - max_logit).exp();
            denom += *p;
        }
        for p in probs.iter_mut() {
            *p = *p / denom;
        }
        loss += -(probs[labels[bi]].ln());

        // d logits = (softmax - onehot) / B
        for ci in 0..c {
            let mut g = probs[ci] * inv_b;
            if ci == labels[bi] {
                g -= inv_b;
            }
            let w = &weight.data()[ci * d..(ci + 1) * d];
            for k in 0..d {
                d_emb.data_mut()[bi * d + k] += g * w[k];
                d_weight.data_mut()[ci * d + k] += g * e[k];
            }
        }
    }
    Ok((loss * inv_b, d_emb, d_weight))
}
