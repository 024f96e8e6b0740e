//! Product quantization: per-segment k-means codebooks, 1-byte codes and
//! asymmetric-distance classification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{vote, KnnError, MemoryReport, QueryResult};

/// Centroids per segment; one byte of code addresses the whole book.
pub const CODEBOOK_SIZE: usize = 256;

/// Product-quantized index. Vectors are zero-padded from `dim` to
/// `padded_dim`, the next multiple of `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PQIndex {
    pub m: usize,
    pub dim: usize,
    pub padded_dim: usize,
    /// Per segment: centroid matrix, row-major k × (padded_dim / m).
    pub codebooks: Vec<Vec<f32>>,
    /// Row-major N × m.
    pub codes: Vec<u8>,
    pub labels: Vec<u32>,
}

impl PQIndex {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn segment_dim(&self) -> usize {
        self.padded_dim / self.m
    }
}

/// Next multiple of m at or above dim.
pub fn padded_dim(dim: usize, m: usize) -> usize {
    dim.div_ceil(m) * m
}

fn pad_vectors(vectors: &[f32], n: usize, dim: usize, padded: usize) -> Vec<f32> {
    if padded == dim {
        return vectors.to_vec();
    }
    let mut out = vec![0.0f32; n * padded];
    for i in 0..n {
        out[i * padded..i * padded + dim].copy_from_slice(&vectors[i * dim..(i + 1) * dim]);
    }
    out
}

fn sub_sqdist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Lloyd k-means over `points` (row-major n × dim) with at most
/// [`CODEBOOK_SIZE`] centroids, initialized from distinct random points.
/// Empty clusters are re-seeded from the point farthest from its centroid.
fn kmeans<R: Rng>(points: &[f32], n: usize, dim: usize, iters: usize, rng: &mut R) -> Vec<f32> {
    // distinct points only, so a degenerate dataset yields an exact codebook
    let mut distinct: Vec<usize> = Vec::new();
    'outer: for i in 0..n {
        let p = &points[i * dim..(i + 1) * dim];
        for &j in &distinct {
            if p == &points[j * dim..(j + 1) * dim] {
                continue 'outer;
            }
        }
        distinct.push(i);
    }
    let k = distinct.len().min(CODEBOOK_SIZE);
    for i in 0..k {
        let j = rng.gen_range(i..distinct.len());
        distinct.swap(i, j);
    }
    let mut centroids: Vec<f32> = Vec::with_capacity(k * dim);
    for &i in &distinct[..k] {
        centroids.extend_from_slice(&points[i * dim..(i + 1) * dim]);
    }
    if k == distinct.len() {
        // every distinct point is its own centroid; Lloyd is a fixed point
        return centroids;
    }

    let mut assign = vec![0usize; n];
    for _ in 0..iters {
        // assignment
        for (i, a) in assign.iter_mut().enumerate() {
            let p = &points[i * dim..(i + 1) * dim];
            *a = (0..k)
                .min_by(|&x, &y| {
                    sub_sqdist(p, &centroids[x * dim..(x + 1) * dim])
                        .partial_cmp(&sub_sqdist(p, &centroids[y * dim..(y + 1) * dim]))
                        .unwrap()
                        .then(x.cmp(&y))
                })
                .unwrap();
        }
        // update
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for d in 0..dim {
                sums[a * dim + d] += points[i * dim + d] as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for d in 0..dim {
                    centroids[c * dim + d] = (sums[c * dim + d] / counts[c] as f64) as f32;
                }
            } else {
                // re-seed from the point farthest from its current centroid
                let far = (0..n)
                    .max_by(|&x, &y| {
                        let dx = sub_sqdist(
                            &points[x * dim..(x + 1) * dim],
                            &centroids[assign[x] * dim..(assign[x] + 1) * dim],
                        );
                        let dy = sub_sqdist(
                            &points[y * dim..(y + 1) * dim],
                            &centroids[assign[y] * dim..(assign[y] + 1) * dim],
                        );
                        dx.partial_cmp(&dy).unwrap().then(y.cmp(&x))
                    })
                    .unwrap();
                let (src, dst) = (far * dim, c * dim);
                for d in 0..dim {
                    centroids[dst + d] = points[src + d];
                }
            }
        }
    }
    centroids
}

/// Train per-segment codebooks over already padded vectors.
pub fn pq_train(
    vectors: &[f32],
    n: usize,
    padded: usize,
    m: usize,
    iters: usize,
    seed: u64,
) -> Result<Vec<Vec<f32>>, KnnError> {
    if m == 0 || padded % m != 0 {
        return Err(KnnError::SegmentMismatch { m, d: padded });
    }
    if n == 0 {
        return Err(KnnError::EmptyIndex);
    }
    let ds = padded / m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codebooks = Vec::with_capacity(m);
    let mut segment = vec![0.0f32; n * ds];
    for s in 0..m {
        for i in 0..n {
            segment[i * ds..(i + 1) * ds]
                .copy_from_slice(&vectors[i * padded + s * ds..i * padded + (s + 1) * ds]);
        }
        codebooks.push(kmeans(&segment, n, ds, iters, &mut rng));
    }
    Ok(codebooks)
}

/// Per segment, the code is the argmin centroid on that sub-vector.
pub fn pq_encode(codebooks: &[Vec<f32>], vectors: &[f32], n: usize, padded: usize) -> Vec<u8> {
    let m = codebooks.len();
    let ds = padded / m;
    let mut codes = Vec::with_capacity(n * m);
    for i in 0..n {
        for (s, book) in codebooks.iter().enumerate() {
            let sub = &vectors[i * padded + s * ds..i * padded + (s + 1) * ds];
            let k = book.len() / ds;
            let best = (0..k)
                .min_by(|&x, &y| {
                    sub_sqdist(sub, &book[x * ds..(x + 1) * ds])
                        .partial_cmp(&sub_sqdist(sub, &book[y * ds..(y + 1) * ds]))
                        .unwrap()
                        .then(x.cmp(&y))
                })
                .unwrap();
            codes.push(best as u8);
        }
    }
    codes
}

/// Pad, train, encode: the full build.
pub fn build_pq_index(
    vectors: &[f32],
    labels: Vec<u32>,
    dim: usize,
    m: usize,
    iters: usize,
    seed: u64,
) -> Result<PQIndex, KnnError> {
    let n = labels.len();
    if n == 0 {
        return Err(KnnError::EmptyIndex);
    }
    if dim == 0 || vectors.len() != n * dim {
        return Err(KnnError::ShapeMismatch(format!(
            "{} values != {} labels x {} dims",
            vectors.len(),
            n,
            dim
        )));
    }
    let padded = padded_dim(dim, m);
    let padded_vectors = pad_vectors(vectors, n, dim, padded);
    let codebooks = pq_train(&padded_vectors, n, padded, m, iters, seed)?;
    let codes = pq_encode(&codebooks, &padded_vectors, n, padded);
    Ok(PQIndex {
        m,
        dim,
        padded_dim: padded,
        codebooks,
        codes,
        labels,
    })
}

/// Asymmetric distance classification: per-segment lookup tables of squared
/// distances from the query sub-vector to every centroid, summed per code
/// row, then the same vote as exact kNN.
pub fn pq_classify(pq: &PQIndex, query: &[f32], k: usize) -> Result<QueryResult, KnnError> {
    if query.len() != pq.dim {
        return Err(KnnError::ShapeMismatch(format!(
            "query dim {} != index dim {}",
            query.len(),
            pq.dim
        )));
    }
    assert!(k >= 1);
    let ds = pq.segment_dim();
    let mut padded_query = vec![0.0f32; pq.padded_dim];
    padded_query[..pq.dim].copy_from_slice(query);

    let mut tables: Vec<Vec<f32>> = Vec::with_capacity(pq.m);
    for (s, book) in pq.codebooks.iter().enumerate() {
        let sub = &padded_query[s * ds..(s + 1) * ds];
        let kc = book.len() / ds;
        tables.push((0..kc).map(|c| sub_sqdist(sub, &book[c * ds..(c + 1) * ds])).collect());
    }

    let scored = (0..pq.len())
        .map(|i| {
            let row = &pq.codes[i * pq.m..(i + 1) * pq.m];
            let d = row
                .iter()
                .enumerate()
                .map(|(s, &c)| tables[s][c as usize])
                .sum();
            (d, i)
        })
        .collect();
    Ok(vote(scored, &pq.labels, k))
}

/// Byte accounting: N·m code bytes, 4 bytes per centroid value, 4·N labels.
pub fn pq_memory_report(pq: &PQIndex) -> MemoryReport {
    MemoryReport {
        payload_bytes: pq.len() * pq.m,
        codebook_bytes: 4 * pq.codebooks.iter().map(|b| b.len()).sum::<usize>(),
        label_bytes: 4 * pq.len(),
    }
}
