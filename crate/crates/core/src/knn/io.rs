//! Index persistence.
//!
//! Binary container, little-endian throughout:
//!
//! ```text
//! magic   4 bytes  "KWSI"
//! version u32      currently 1
//! kind    u8       0 = exact, 1 = product-quantized
//! n       u64      stored vectors
//! dim     u64      embedding dimension
//! vocab   u32 count, then per word: u32 byte length + UTF-8 bytes
//! labels  n x u32
//! exact:  n x dim f32 vectors
//! pq:     u64 m, u64 padded_dim,
//!         per segment: u32 centroid count + count x (padded_dim/m) f32,
//!         n x m code bytes
//! ```

use std::fs;
use std::path::Path;

use super::{build_index, EmbeddingIndex, KnnError, PQIndex};

const MAGIC: &[u8; 4] = b"KWSI";
const VERSION: u32 = 1;

/// An index plus the class-id → word mapping it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexFile {
    pub vocab: Vec<String>,
    pub kind: IndexKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IndexKind {
    Exact(EmbeddingIndex),
    Pq(PQIndex),
}

struct Reader<'a> {
    bytes: &'a [u8],
    off: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], KnnError> {
        let s = self
            .bytes
            .get(self.off..self.off + n)
            .ok_or_else(|| KnnError::MalformedIndex("unexpected end of file".into()))?;
        self.off += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, KnnError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, KnnError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, KnnError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>, KnnError> {
        let b = self.take(count * 4)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn u32s(&mut self, count: usize) -> Result<Vec<u32>, KnnError> {
        let b = self.take(count * 4)?;
        Ok(b.chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

pub fn save_index(path: &Path, file: &IndexFile) -> Result<(), KnnError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let (kind, n, dim, labels) = match &file.kind {
        IndexKind::Exact(e) => (0u8, e.len(), e.dim(), e.labels()),
        IndexKind::Pq(p) => (1u8, p.len(), p.dim, p.labels.as_slice()),
    };
    out.push(kind);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(dim as u64).to_le_bytes());
    out.extend_from_slice(&(file.vocab.len() as u32).to_le_bytes());
    for word in &file.vocab {
        out.extend_from_slice(&(word.len() as u32).to_le_bytes());
        out.extend_from_slice(word.as_bytes());
    }
    for &l in labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    match &file.kind {
        IndexKind::Exact(e) => {
            for &v in e.vectors() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        IndexKind::Pq(p) => {
            out.extend_from_slice(&(p.m as u64).to_le_bytes());
            out.extend_from_slice(&(p.padded_dim as u64).to_le_bytes());
            let ds = p.segment_dim();
            for book in &p.codebooks {
                out.extend_from_slice(&((book.len() / ds) as u32).to_le_bytes());
                for &v in book {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            out.extend_from_slice(&p.codes);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<IndexFile, KnnError> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        off: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(KnnError::MalformedIndex("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(KnnError::MalformedIndex(format!(
            "unsupported version {version}"
        )));
    }
    let kind = r.u8()?;
    let n = r.u64()? as usize;
    let dim = r.u64()? as usize;
    let vocab_len = r.u32()? as usize;
    let mut vocab = Vec::with_capacity(vocab_len);
    for _ in 0..vocab_len {
        let len = r.u32()? as usize;
        let word = std::str::from_utf8(r.take(len)?)
            .map_err(|_| KnnError::MalformedIndex("vocab entry is not UTF-8".into()))?;
        vocab.push(word.to_string());
    }
    let labels = r.u32s(n)?;

    let kind = match kind {
        0 => {
            let vectors = r.f32s(n * dim)?;
            IndexKind::Exact(build_index(vectors, labels, dim)?)
        }
        1 => {
            let m = r.u64()? as usize;
            let padded_dim = r.u64()? as usize;
            if m == 0 || padded_dim % m != 0 {
                return Err(KnnError::MalformedIndex("bad segment header".into()));
            }
            let ds = padded_dim / m;
            let mut codebooks = Vec::with_capacity(m);
            for _ in 0..m {
                let count = r.u32()? as usize;
                codebooks.push(r.f32s(count * ds)?);
            }
            let codes = r.take(n * m)?.to_vec();
            IndexKind::Pq(PQIndex {
                m,
                dim,
                padded_dim,
                codebooks,
                codes,
                labels,
            })
        }
        other => {
            return Err(KnnError::MalformedIndex(format!(
                "unknown index kind {other}"
            )))
        }
    };
    if r.off != bytes.len() {
        return Err(KnnError::MalformedIndex("trailing bytes".into()));
    }
    Ok(IndexFile { vocab, kind })
}
