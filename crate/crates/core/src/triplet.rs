//! Squared Euclidean distances, the triplet hinge loss and the randomized
//! online mining variant: for each anchor take the hardest positive, then
//! draw the negative uniformly from the negatives with non-zero loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Scalar;

/// Hinge gap of the triplet loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin(pub f64);

impl Default for Margin {
    fn default() -> Self {
        Margin(0.2)
    }
}

/// Symmetric batch-by-batch matrix of squared distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T: Scalar> {
    n: usize,
    d: Vec<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.d[i * self.n + j]
    }
}

/// An (anchor, positive, negative) index triple into a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// d[i][j] = ||e_i - e_j||^2 for a row-major B x D embedding matrix.
pub fn pairwise_sqdist<T: Scalar>(embeddings: &[T], batch: usize, dim: usize) -> DistanceMatrix<T> {
    assert_eq!(embeddings.len(), batch * dim);
    let mut d = vec![T::ZERO; batch * batch];
    for i in 0..batch {
        for j in (i + 1)..batch {
            let a = &embeddings[i * dim..(i + 1) * dim];
            let b = &embeddings[j * dim..(j + 1) * dim];
            let mut acc = T::ZERO;
            for k in 0..dim {
                let diff = a[k] - b[k];
                acc += diff * diff;
            }
            d[i * batch + j] = acc;
            d[j * batch + i] = acc;
        }
    }
    DistanceMatrix { n: batch, d }
}

/// max(0, g + d_ap - d_an).
pub fn triplet_loss<T: Scalar>(d_ap: T, d_an: T, margin: Margin) -> T {
    (T::from_f64(margin.0) + d_ap - d_an).max(T::ZERO)
}

/// Randomized online mining.
///
/// For each anchor whose class has at least two batch members: the positive
/// is the farthest same-class element (ties to the lowest index), and the
/// negative is drawn uniformly from the other-class elements that violate
/// the margin. Anchors with no violating negative emit nothing.
pub fn mine_triplets<T: Scalar, R: Rng>(
    dist: &DistanceMatrix<T>,
    labels: &[usize],
    margin: Margin,
    rng: &mut R,
) -> Vec<Triplet> {
    assert_eq!(dist.len(), labels.len());
    let batch = labels.len();
    let mut triplets = Vec::new();
    let mut candidates = Vec::new();

    for anchor in 0..batch {
        let mut positive: Option<(usize, T)> = None;
        for j in 0..batch {
            if j != anchor && labels[j] == labels[anchor] {
                let d = dist.at(anchor, j);
                let farther = match positive {
                    Some((_, best)) => d > best,
                    None => true,
                };
                if farther {
                    positive = Some((j, d));
                }
            }
        }
        let Some((positive, d_ap)) = positive else {
            continue;
        };

        candidates.clear();
        for negative in 0..batch {
            if labels[negative] != labels[anchor]
                && triplet_loss(d_ap, dist.at(anchor, negative), margin) > T::ZERO
            {
                candidates.push(negative);
            }
        }
        if !candidates.is_empty() {
            let negative = candidates[rng.gen_range(0..candidates.len())];
            triplets.push(Triplet {
                anchor,
                positive,
                negative,
            });
        }
    }
    triplets
}

/// Mean triplet loss and its exact (sub)gradient over a fixed triplet set.
///
/// Returns the loss and the gradient w.r.t. the embeddings, both zero when
/// the set is empty. Split out from [`batch_triplet_loss`] so gradient tests
/// can freeze the mined triplets.
pub fn loss_over_triplets<T: Scalar>(
    embeddings: &[T],
    batch: usize,
    dim: usize,
    triplets: &[Triplet],
    margin: Margin,
) -> (T, Vec<T>) {
    assert_eq!(embeddings.len(), batch * dim);
    let mut grad = vec![T::ZERO; batch * dim];
    if triplets.is_empty() {
        return (T::ZERO, grad);
    }

    let row = |i: usize| &embeddings[i * dim..(i + 1) * dim];
    let inv_count = T::ONE / T::from_f64(triplets.len() as f64);
    let mut total = T::ZERO;
    let two = T::from_f64(2.0);

    for t in triplets {
        let (a, p, n) = (row(t.anchor), row(t.positive), row(t.negative));
        let mut d_ap = T::ZERO;
        let mut d_an = T::ZERO;
        for k in 0..dim {
            let dp = a[k] - p[k];
            let dn = a[k] - n[k];
            d_ap += dp * dp;
            d_an += dn * dn;
        }
        let loss = triplet_loss(d_ap, d_an, margin);
        total += loss;
        if loss > T::ZERO {
            for k in 0..dim {
                let dp = two * (a[k] - p[k]) * inv_count;
                let dn = two * (a[k] - n[k]) * inv_count;
                grad[t.anchor * dim + k] += dp - dn;
                grad[t.positive * dim + k] -= dp;
                grad[t.negative * dim + k] += dn;
            }
        }
    }
    (total * inv_count, grad)
}

/// Mine triplets and return (mean loss, gradient w.r.t. embeddings, count).
pub fn batch_triplet_loss<T: Scalar, R: Rng>(
    embeddings: &[T],
    batch: usize,
    dim: usize,
    labels: &[usize],
    margin: Margin,
    rng: &mut R,
) -> (T, Vec<T>, usize) {
    let dist = pairwise_sqdist(embeddings, batch, dim);
    let triplets = mine_triplets(&dist, labels, margin, rng);
    let (loss, grad) = loss_over_triplets(embeddings, batch, dim, &triplets, margin);
    (loss, grad, triplets.len())
}
