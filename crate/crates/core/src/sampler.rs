//! Class-level batch composition: uniform, proportional and phonetic
//! strategies, equal-probability mixtures of them, and PK-batch assembly.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phonetics::{PhoneticError, SimilarityMatrix};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("requested {requested} classes but the catalog has {available}")]
    NotEnoughClasses { requested: usize, available: usize },
    #[error("class {0:?} has no samples")]
    EmptyClass(String),
    #[error("unknown sampling strategy {0:?} (expected uniform|proportional|phonetic|u+p|u+ph|p+ph|u+p+ph)")]
    UnknownStrategy(String),
    #[error(transparent)]
    Phonetic(#[from] PhoneticError),
}

/// Classes with their per-class sample-id lists.
#[derive(Debug, Clone)]
pub struct ClassCatalog {
    classes: Vec<String>,
    index: Vec<Vec<usize>>,
}

impl ClassCatalog {
    pub fn new(classes: Vec<String>, index: Vec<Vec<usize>>) -> Result<Self, SamplerError> {
        assert_eq!(classes.len(), index.len());
        for (c, ids) in classes.iter().zip(&index) {
            if ids.is_empty() {
                return Err(SamplerError::EmptyClass(c.clone()));
            }
        }
        Ok(Self { classes, index })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn count(&self, class: usize) -> usize {
        self.index[class].len()
    }

    pub fn samples(&self, class: usize) -> &[usize] {
        &self.index[class]
    }

    fn position(&self, word: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == word)
    }
}

/// P classes per batch, K samples per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub p: usize,
    pub k: usize,
}

impl BatchSpec {
    pub fn new(p: usize, k: usize) -> Self {
        assert!(p >= 2 && k >= 2, "triplets need >= 2 classes and >= 2 samples per class");
        Self { p, k }
    }

    pub fn batch_size(&self) -> usize {
        self.p * self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Uniform,
    Proportional,
    Phonetic,
}

/// Non-empty strategy set; one member is drawn uniformly per batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyMix {
    members: Vec<Strategy>,
}

impl StrategyMix {
    pub fn new(members: Vec<Strategy>) -> Self {
        assert!(!members.is_empty(), "strategy mix must be non-empty");
        Self { members }
    }

    pub fn members(&self) -> &[Strategy] {
        &self.members
    }

    /// Parse the CLI spelling: `uniform`, `proportional`, `phonetic`, or the
    /// abbreviations `u+p`, `u+ph`, `p+ph`, `u+p+ph`.
    pub fn parse(s: &str) -> Result<Self, SamplerError> {
        let mut members = Vec::new();
        for part in s.split('+') {
            let m = match part.trim() {
                "u" | "uniform" => Strategy::Uniform,
                "p" | "proportional" => Strategy::Proportional,
                "ph" | "phonetic" => Strategy::Phonetic,
                _ => return Err(SamplerError::UnknownStrategy(s.to_string())),
            };
            if members.contains(&m) {
                return Err(SamplerError::UnknownStrategy(s.to_string()));
            }
            members.push(m);
        }
        if members.is_empty() {
            return Err(SamplerError::UnknownStrategy(s.to_string()));
        }
        Ok(Self { members })
    }
}

fn check_p(catalog: &ClassCatalog, p: usize) -> Result<(), SamplerError> {
    if p > catalog.len() {
        return Err(SamplerError::NotEnoughClasses {
            requested: p,
            available: catalog.len(),
        });
    }
    Ok(())
}

/// P distinct classes, uniform without replacement.
pub fn sample_uniform<R: Rng>(
    catalog: &ClassCatalog,
    p: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SamplerError> {
    check_p(catalog, p)?;
    let mut pool: Vec<usize> = (0..catalog.len()).collect();
    for i in 0..p {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(p);
    Ok(pool)
}

/// P distinct classes by sequential weighted draws without replacement,
/// weights proportional to per-class sample counts.
pub fn sample_proportional<R: Rng>(
    catalog: &ClassCatalog,
    p: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SamplerError> {
    check_p(catalog, p)?;
    let mut remaining: Vec<usize> = (0..catalog.len()).collect();
    let mut weights: Vec<f64> = remaining.iter().map(|&c| catalog.count(c) as f64).collect();
    let mut total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(p);
    for _ in 0..p {
        let mut target = rng.gen_range(0.0..total);
        let mut pick = remaining.len() - 1;
        for (i, &w) in weights.iter().enumerate() {
            if target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        out.push(remaining[pick]);
        total -= weights[pick];
        remaining.swap_remove(pick);
        weights.swap_remove(pick);
    }
    Ok(out)
}

/// Seed ceil(P/4) classes uniformly, then add up to 3 phonetic neighbors per
/// seed; duplicates are skipped, overflow is truncated keeping seeds first,
/// and any shortfall is filled with uniform draws.
pub fn sample_phonetic<R: Rng>(
    catalog: &ClassCatalog,
    matrix: &SimilarityMatrix,
    p: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SamplerError> {
    check_p(catalog, p)?;
    let seeds = sample_uniform(catalog, p.div_ceil(4), rng)?;
    let mut out = seeds.clone();
    for &seed in &seeds {
        if out.len() >= p {
            break;
        }
        let want = 3.min(matrix.vocab().len().saturating_sub(1));
        if want == 0 {
            continue;
        }
        for word in matrix.nearest_phonetic(&catalog.classes[seed], want, rng)? {
            if out.len() >= p {
                break;
            }
            // neighbors outside the catalog (or already chosen) are skipped
            if let Some(idx) = catalog.position(&word) {
                if !out.contains(&idx) {
                    out.push(idx);
                }
            }
        }
    }
    // back-fill with uniform draws over the unchosen classes
    if out.len() < p {
        let mut rest: Vec<usize> = (0..catalog.len()).filter(|c| !out.contains(c)).collect();
        while out.len() < p {
            let j = rng.gen_range(0..rest.len());
            out.push(rest.swap_remove(j));
        }
    }
    out.truncate(p);
    Ok(out)
}

/// Pick one member strategy uniformly and delegate. Also returns which
/// strategy ran, for logging and mixture tests.
pub fn sample_mixture<R: Rng>(
    catalog: &ClassCatalog,
    matrix: &SimilarityMatrix,
    p: usize,
    mix: &StrategyMix,
    rng: &mut R,
) -> Result<(Strategy, Vec<usize>), SamplerError> {
    let strategy = mix.members[rng.gen_range(0..mix.members.len())];
    let classes = match strategy {
        Strategy::Uniform => sample_uniform(catalog, p, rng)?,
        Strategy::Proportional => sample_proportional(catalog, p, rng)?,
        Strategy::Phonetic => sample_phonetic(catalog, matrix, p, rng)?,
    };
    Ok((strategy, classes))
}

/// Draw K sample ids per chosen class: without replacement when the class has
/// at least K samples, with replacement otherwise. Returns (sample id, class)
/// pairs in class order.
pub fn compose_batch<R: Rng>(
    classes: &[usize],
    catalog: &ClassCatalog,
    k: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(classes.len() * k);
    for &class in classes {
        let ids = catalog.samples(class);
        if ids.len() >= k {
            let mut pool = ids.to_vec();
            for i in 0..k {
                let j = rng.gen_range(i..pool.len());
                pool.swap(i, j);
            }
            out.extend(pool[..k].iter().map(|&id| (id, class)));
        } else {
            out.extend((0..k).map(|_| (ids[rng.gen_range(0..ids.len())], class)));
        }
    }
    out
}
