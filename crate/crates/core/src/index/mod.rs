//! Exact and scalar-quantized vector indices.
//!
//! Scores are squared Euclidean distance for [`Metric::L2`] (lower is
//! better) and cosine similarity for [`Metric::Cosine`] (higher is better).
//! Every result list is ordered best-first with ties broken by ascending id,
//! which makes the exhaustive oracle and the heap-based search agree exactly.

mod flat;
mod oracle;
mod persist;
mod quant;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use flat::{build_flat, FlatIndex};
pub use oracle::brute_force_oracle;
pub use persist::{load_index, save_index, FORMAT_VERSION, MAGIC};
pub use quant::{calibrate, quantize_index, search_quantized, Calibration, QuantizedIndex};

/// Number of neighbours retrieved when the caller does not say otherwise.
pub const DEFAULT_K: usize = 2;

/// Default quantile for clip calibration.
pub const DEFAULT_CLIP_QUANTILE: f64 = 0.999;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("row `{0}` is not unit-normalized, required for cosine metric")]
    UnnormalizedForCosine(String),
    #[error("{ids} ids for {rows} vectors")]
    CountMismatch { ids: usize, rows: usize },
    #[error("non-finite value in row `{0}`")]
    NonFinite(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index needs at least one vector")]
    EmptyInput,
    #[error("clip quantile {0} outside (0.5, 1]")]
    InvalidQuantile(f64),
    #[error("scheme `{0}` is not a quantized scheme")]
    NotQuantized(Scheme),
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index format version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt index payload: {0}")]
    CorruptPayload(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L2,
    #[default]
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Flat,
    Q8,
    Q4,
}

impl Scheme {
    /// Highest code value: 255 for Q8, 15 for Q4.
    pub fn levels(self) -> u32 {
        match self {
            Scheme::Flat => 0,
            Scheme::Q8 => 255,
            Scheme::Q4 => 15,
        }
    }

    /// Bytes used by one stored row of `dims` coordinates.
    pub fn row_bytes(self, dims: usize) -> usize {
        match self {
            Scheme::Flat => dims * 4,
            Scheme::Q8 => dims,
            Scheme::Q4 => dims.div_ceil(2),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "flat" => Ok(Scheme::Flat),
            "q8" => Ok(Scheme::Q8),
            "q4" => Ok(Scheme::Q4),
            other => Err(format!("unknown scheme `{other}` (expected flat, q8 or q4)")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Flat => "flat",
            Scheme::Q8 => "q8",
            Scheme::Q4 => "q4",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
    /// 1-based position in the result list.
    pub rank: usize,
}

/// Either kind of index, as loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorIndex {
    Flat(FlatIndex),
    Quantized(QuantizedIndex),
}

impl VectorIndex {
    pub fn dims(&self) -> usize {
        match self {
            VectorIndex::Flat(f) => f.dims(),
            VectorIndex::Quantized(q) => q.dims(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> &[String] {
        match self {
            VectorIndex::Flat(f) => f.ids(),
            VectorIndex::Quantized(q) => q.ids(),
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            VectorIndex::Flat(f) => f.metric(),
            VectorIndex::Quantized(q) => q.metric(),
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            VectorIndex::Flat(_) => Scheme::Flat,
            VectorIndex::Quantized(q) => q.scheme(),
        }
    }

    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>, IndexError> {
        match self {
            VectorIndex::Flat(f) => f.search(query, k),
            VectorIndex::Quantized(q) => search_quantized(q, query, k),
        }
    }

    /// Bytes of stored vector payload (f32 rows or packed codes).
    pub fn vector_bytes(&self) -> usize {
        self.len() * self.scheme().row_bytes(self.dims())
    }

    /// Bytes the same rows would take as f32.
    pub fn flat_equivalent_bytes(&self) -> usize {
        self.len() * Scheme::Flat.row_bytes(self.dims())
    }

    /// Approximate resident size: vectors, calibration tables and id strings.
    pub fn resident_bytes(&self) -> usize {
        let ids: usize = self.ids().iter().map(|s| s.len() + std::mem::size_of::<String>()).sum();
        let calibration = match self {
            VectorIndex::Flat(_) => 0,
            VectorIndex::Quantized(q) => q.metadata_bytes(),
        };
        self.vector_bytes() + calibration + ids
    }
}

impl From<FlatIndex> for VectorIndex {
    fn from(f: FlatIndex) -> Self {
        VectorIndex::Flat(f)
    }
}

impl From<QuantizedIndex> for VectorIndex {
    fn from(q: QuantizedIndex) -> Self {
        VectorIndex::Quantized(q)
    }
}

/// Sort key where smaller is better for both metrics.
fn badness(metric: Metric, score: f64) -> f64 {
    match metric {
        Metric::L2 => score,
        Metric::Cosine => -score,
    }
}

struct Candidate<'a> {
    badness: f64,
    score: f64,
    id: &'a str,
}

impl Candidate<'_> {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.badness
            .total_cmp(&other.badness)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp_key(other) == Ordering::Equal
    }
}
impl Eq for Candidate<'_> {}
impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_key(other)
    }
}

/// Bounded top-k selection; the heap top is the worst retained candidate.
pub(crate) struct TopK<'a> {
    k: usize,
    metric: Metric,
    heap: BinaryHeap<Candidate<'a>>,
}

impl<'a> TopK<'a> {
    pub(crate) fn new(k: usize, metric: Metric) -> Self {
        Self {
            k,
            metric,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    pub(crate) fn offer(&mut self, id: &'a str, score: f64) {
        let cand = Candidate {
            badness: badness(self.metric, score),
            score,
            id,
        };
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(worst) = self.heap.peek() {
            if cand < *worst {
                self.heap.pop();
                self.heap.push(cand);
            }
        }
    }

    pub(crate) fn into_hits(self) -> Vec<SearchHit> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .enumerate()
            .map(|(i, c)| SearchHit {
                id: c.id.to_string(),
                score: c.score,
                rank: i + 1,
            })
            .collect()
    }
}

pub(crate) fn check_query(dims: usize, query: &[f32], k: usize) -> Result<(), IndexError> {
    if k == 0 {
        return Err(IndexError::InvalidK);
    }
    if query.len() != dims {
        return Err(IndexError::DimMismatch {
            expected: dims,
            actual: query.len(),
        });
    }
    Ok(())
}

pub(crate) fn norm_f64(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}
