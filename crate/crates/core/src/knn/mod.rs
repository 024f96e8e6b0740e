//! Exact kNN classification over stored embeddings, a product-quantized
//! variant, byte-exact memory accounting and index persistence.

mod io;
mod pq;

use thiserror::Error;

pub use io::{load_index, save_index, IndexFile, IndexKind};
pub use pq::{
    build_pq_index, padded_dim, pq_classify, pq_encode, pq_memory_report, pq_train, PQIndex,
    CODEBOOK_SIZE,
};

#[derive(Debug, Error)]
pub enum KnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("segment count {m} does not divide dimension {d}")]
    SegmentMismatch { m: usize, d: usize },
    #[error("malformed index file: {0}")]
    MalformedIndex(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Flat store of N × D embeddings with class labels; squared Euclidean metric.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    vectors: Vec<f32>,
    labels: Vec<u32>,
    n: usize,
    dim: usize,
}

impl EmbeddingIndex {
    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Prediction with its supporting neighbors, distances ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub label: u32,
    pub neighbor_ids: Vec<usize>,
    pub distances: Vec<f32>,
}

/// Byte accounting for an index: payload (vectors or codes), codebooks,
/// labels and the total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryReport {
    pub payload_bytes: usize,
    pub codebook_bytes: usize,
    pub label_bytes: usize,
}

impl MemoryReport {
    pub fn total(&self) -> usize {
        self.payload_bytes + self.codebook_bytes + self.label_bytes
    }
}

/// Store embeddings and labels verbatim.
pub fn build_index(vectors: Vec<f32>, labels: Vec<u32>, dim: usize) -> Result<EmbeddingIndex, KnnError> {
    if labels.is_empty() {
        return Err(KnnError::EmptyIndex);
    }
    if dim == 0 || vectors.len() != labels.len() * dim {
        return Err(KnnError::ShapeMismatch(format!(
            "{} values != {} labels x {} dims",
            vectors.len(),
            labels.len(),
            dim
        )));
    }
    Ok(EmbeddingIndex {
        n: labels.len(),
        vectors,
        labels,
        dim,
    })
}

fn sqdist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Majority vote among the k candidates with the smallest distances.
///
/// Vote ties break to the class with the smaller summed distance among its
/// voters, then to the smaller class id. Neighbor order is ascending
/// distance with index as the tie-break.
fn vote(mut scored: Vec<(f32, usize)>, labels: &[u32], k: usize) -> QueryResult {
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    scored.truncate(k.min(labels.len()));

    let mut tally: Vec<(u32, usize, f32)> = Vec::new(); // (label, votes, summed distance)
    for &(d, i) in &scored {
        let label = labels[i];
        match tally.iter_mut().find(|t| t.0 == label) {
            Some(t) => {
                t.1 += 1;
                t.2 += d;
            }
            None => tally.push((label, 1, d)),
        }
    }
    let label = tally
        .iter()
        .max_by(|a, b| {
            a.1.cmp(&b.1)
                .then(b.2.partial_cmp(&a.2).unwrap())
                .then(b.0.cmp(&a.0))
        })
        .unwrap()
        .0;

    QueryResult {
        label,
        neighbor_ids: scored.iter().map(|&(_, i)| i).collect(),
        distances: scored.iter().map(|&(d, _)| d).collect(),
    }
}

/// Exact k-nearest-neighbor classification.
pub fn knn_classify(index: &EmbeddingIndex, query: &[f32], k: usize) -> Result<QueryResult, KnnError> {
    if query.len() != index.dim {
        return Err(KnnError::ShapeMismatch(format!(
            "query dim {} != index dim {}",
            query.len(),
            index.dim
        )));
    }
    assert!(k >= 1);
    let scored = (0..index.n)
        .map(|i| (sqdist(query, &index.vectors[i * index.dim..(i + 1) * index.dim]), i))
        .collect();
    Ok(vote(scored, &index.labels, k))
}

/// Byte accounting for the exact index: 4·N·D vectors + 4·N labels.
pub fn memory_report(index: &EmbeddingIndex) -> MemoryReport {
    MemoryReport {
        payload_bytes: 4 * index.n * index.dim,
        codebook_bytes: 0,
        label_bytes: 4 * index.n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_index() -> EmbeddingIndex {
        build_index(
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 5.0, 5.0],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap()
    }

    #[test]
    fn self_query_distance_zero() {
        let index = small_index();
        let r = knn_classify(&index, &[5.0, 5.0], 1).unwrap();
        assert_eq!(r.label, 1);
        assert_eq!(r.neighbor_ids, vec![3]);
        assert_eq!(r.distances, vec![0.0]);
    }

    #[test]
    fn empty_and_mismatched_inputs_rejected() {
        assert!(matches!(build_index(vec![], vec![], 2), Err(KnnError::EmptyIndex)));
        assert!(matches!(
            build_index(vec![1.0; 5], vec![0, 1], 2),
            Err(KnnError::ShapeMismatch(_))
        ));
        let index = small_index();
        assert!(matches!(
            knn_classify(&index, &[1.0], 1),
            Err(KnnError::ShapeMismatch(_))
        ));
    }

    /// Independent oracle: full sort of all (distance, id) pairs plus a
    /// literal re-implementation of the tie rules.
    fn brute_force(index: &EmbeddingIndex, query: &[f32], k: usize) -> u32 {
        let d = index.dim();
        let mut all: Vec<(f32, usize)> = (0..index.len())
            .map(|i| {
                let v = &index.vectors()[i * d..(i + 1) * d];
                (
                    v.iter().zip(query).map(|(&a, &b)| (a - b) * (a - b)).sum(),
                    i,
                )
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.truncate(k.min(index.len()));
        let mut best: Option<(usize, f32, u32)> = None;
        let labels: std::collections::BTreeSet<u32> =
            all.iter().map(|&(_, i)| index.labels()[i]).collect();
        for label in labels {
            let votes = all.iter().filter(|&&(_, i)| index.labels()[i] == label).count();
            let sum: f32 = all
                .iter()
                .filter(|&&(_, i)| index.labels()[i] == label)
                .map(|&(d, _)| d)
                .sum();
            let better = match best {
                None => true,
                Some((bv, bs, bl)) => {
                    votes > bv || (votes == bv && (sum < bs || (sum == bs && label < bl)))
                }
            };
            if better {
                best = Some((votes, sum, label));
            }
        }
        best.unwrap().2
    }

    #[test]
    fn matches_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..10 {
            let n = rng.gen_range(5..60);
            let dim = rng.gen_range(2..6);
            let vectors: Vec<f32> = (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let index = build_index(vectors, labels, dim).unwrap();
            for _ in 0..100 {
                let query: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let k = rng.gen_range(1..8);
                let got = knn_classify(&index, &query, k).unwrap();
                assert_eq!(got.label, brute_force(&index, &query, k), "trial {trial}");
                // result invariants
                assert_eq!(got.neighbor_ids.len(), k.min(index.len()));
                assert!(got.distances.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn vote_tie_breaks_to_closer_class() {
        // engineered 2-2 vote tie: class 0 at distances {1, 4}, class 1 at {2, 2}
        let index = build_index(
            vec![1.0, 0.0, -2.0, 0.0, 0.0, 2.0, 0.0, -2.0],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let r = knn_classify(&index, &[0.0, 0.0], 4).unwrap();
        // sums: class 0 -> 1 + 4 = 5, class 1 -> 4 + 4 = 8
        assert_eq!(r.label, 0);
    }

    #[test]
    fn vote_tie_breaks_to_smaller_class_id() {
        let index = build_index(vec![1.0, -1.0], vec![3, 1], 1).unwrap();
        let r = knn_classify(&index, &[0.0], 2).unwrap();
        assert_eq!(r.label, 1);
    }

    #[test]
    fn memory_accounting() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (n, d) = (10, 45);
        let vectors: Vec<f32> = (0..n * d).map(|_| rng.gen()).collect();
        let index = build_index(vectors, vec![0; n], d).unwrap();
        let report = memory_report(&index);
        assert_eq!(report.payload_bytes, 1800);
        assert_eq!(report.payload_bytes, 4 * n * d);
        assert_eq!(report.label_bytes, 4 * n);
        assert_eq!(report.total(), report.payload_bytes + report.label_bytes);
    }
}
